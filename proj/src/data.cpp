// SPDX-License-Identifier: Apache-2.0
#include "smie/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "binary_io.hpp"
#include "smie/errors.hpp"
#include "smie/rng.hpp"

namespace smie {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::array<unsigned char, 4> kSkeletonMagic{0x53, 0x4D, 0x53, 0x4B};  // SMSK
constexpr std::array<unsigned char, 4> kEmbeddingMagic{0x53, 0x4D, 0x45, 0x4D};  // SMEM
constexpr std::uint32_t kFormatVersion = 1;

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const json& doc, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::uint32_t checked_u32(std::size_t n, const char* what) {
  if (n > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument(std::string(what) + " does not fit in u32");
  }
  return static_cast<std::uint32_t>(n);
}

float checked_f32(double v, const std::string& where) {
  const auto f = static_cast<float>(v);
  if (!std::isfinite(f)) throw DataError(where + ": non-finite value");
  return f;
}

const char* subset_name(Subset s) {
  switch (s) {
    case Subset::kTrain: return "train";
    case Subset::kTest: return "test";
    case Subset::kAll: return "all";
  }
  return "all";
}

}  // namespace

void SkeletonSequence::validate() const {
  if (frames == 0 || joints == 0 || channels == 0) {
    throw std::invalid_argument("skeleton sequence has a zero dimension");
  }
  if (values.size() != frames * joints * channels) {
    throw std::invalid_argument("skeleton payload length does not match K*J*C");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("skeleton contains non-finite value");
  }
}

const ClassEntry* DatasetManifest::find_class(int id) const {
  auto it = std::find_if(classes.begin(), classes.end(),
                         [id](const ClassEntry& c) { return c.id == id; });
  return it == classes.end() ? nullptr : &*it;
}

const SampleEntry* DatasetManifest::find_sample(int id) const {
  auto it = std::find_if(samples.begin(), samples.end(),
                         [id](const SampleEntry& s) { return s.id == id; });
  return it == samples.end() ? nullptr : &*it;
}

std::vector<int> DatasetManifest::class_ids() const {
  std::vector<int> ids;
  ids.reserve(classes.size());
  for (const auto& c : classes) ids.push_back(c.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

void ClassSplit::validate(std::span<const int> class_ids) const {
  if (seen.empty()) throw DataError("split: seen set is empty");
  if (unseen.empty()) throw DataError("split: unseen set is empty");
  std::set<int> s(seen.begin(), seen.end());
  if (s.size() != seen.size()) throw DataError("split: duplicate seen class id");
  std::set<int> u(unseen.begin(), unseen.end());
  if (u.size() != unseen.size()) throw DataError("split: duplicate unseen class id");
  for (int id : unseen) {
    if (s.count(id)) throw DataError("split: class " + std::to_string(id) + " is both seen and unseen");
  }
  if (!class_ids.empty()) {
    std::set<int> known(class_ids.begin(), class_ids.end());
    for (int id : seen) {
      if (!known.count(id)) throw DataError("split: unknown seen class " + std::to_string(id));
    }
    for (int id : unseen) {
      if (!known.count(id)) throw DataError("split: unknown unseen class " + std::to_string(id));
    }
  }
}

// ---- file formats ----------------------------------------------------------

DatasetManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("manifest not found: " + path.string());
  const json doc = read_json(path);
  DatasetManifest m;
  m.root = path.parent_path();
  try {
    for (const auto& c : doc.at("classes")) {
      m.classes.push_back({c.at("id").get<int>(), c.at("name").get<std::string>(),
                           fs::path(c.at("embedding").get<std::string>())});
    }
    for (const auto& s : doc.at("samples")) {
      SampleEntry e{s.at("id").get<int>(), s.at("class_id").get<int>(),
                    fs::path(s.at("skeleton").get<std::string>()), Subset::kAll};
      if (s.contains("subset")) {
        const auto tag = s.at("subset").get<std::string>();
        if (tag == "train") e.subset = Subset::kTrain;
        else if (tag == "test") e.subset = Subset::kTest;
        else if (tag != "all")
          throw DataError("sample " + std::to_string(e.id) + ": unknown subset '" + tag + "'");
      }
      m.samples.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }

  if (m.classes.empty()) throw DataError("manifest " + path.string() + ": no classes");
  std::set<int> class_ids;
  for (const auto& c : m.classes) {
    if (!class_ids.insert(c.id).second) {
      throw DataError("manifest: duplicate class_id " + std::to_string(c.id));
    }
    if (!fs::exists(m.root / c.embedding)) {
      throw IoError("class " + std::to_string(c.id) + ": missing embedding file " +
                    (m.root / c.embedding).string());
    }
  }
  std::set<int> sample_ids;
  for (const auto& s : m.samples) {
    if (!sample_ids.insert(s.id).second) {
      throw DataError("manifest: duplicate sample id " + std::to_string(s.id));
    }
    if (!class_ids.count(s.class_id)) {
      throw DataError("sample " + std::to_string(s.id) + ": references unknown class_id " +
                      std::to_string(s.class_id));
    }
    if (!fs::exists(m.root / s.skeleton)) {
      throw IoError("sample " + std::to_string(s.id) + ": missing skeleton file " +
                    (m.root / s.skeleton).string());
    }
  }
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  json doc;
  doc["classes"] = json::array();
  for (const auto& c : manifest.classes) {
    doc["classes"].push_back(
        {{"id", c.id}, {"name", c.name}, {"embedding", c.embedding.generic_string()}});
  }
  doc["samples"] = json::array();
  for (const auto& s : manifest.samples) {
    json e{{"id", s.id}, {"class_id", s.class_id}, {"skeleton", s.skeleton.generic_string()}};
    if (s.subset != Subset::kAll) e["subset"] = subset_name(s.subset);
    doc["samples"].push_back(std::move(e));
  }
  write_json(doc, path);
}

SkeletonSequence read_skeleton(const fs::path& path) {
  auto in = detail::ByteReader::load(path);
  in.expect_magic(kSkeletonMagic);
  const auto version = in.u32();
  if (version != kFormatVersion) {
    throw DataError(path.string() + ": unsupported version " + std::to_string(version));
  }
  const std::size_t k = in.u32(), j = in.u32(), c = in.u32();
  if (k == 0 || j == 0 || c == 0) throw DataError(path.string() + ": zero dimension");
  const std::size_t count = k * j * c;
  if (in.remaining() != count * sizeof(float)) {
    throw DataError(path.string() + ": truncated payload (expected " + std::to_string(count) +
                    " values)");
  }
  SkeletonSequence seq(k, j, c);
  for (std::size_t i = 0; i < count; ++i) {
    const float v = in.f32();
    if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite value");
    seq.values[i] = v;
  }
  return seq;
}

void write_skeleton(const SkeletonSequence& seq, const fs::path& path) {
  seq.validate();
  detail::ByteWriter out;
  out.bytes(kSkeletonMagic.data(), 4);
  out.u32(kFormatVersion);
  out.u32(checked_u32(seq.frames, "K"));
  out.u32(checked_u32(seq.joints, "J"));
  out.u32(checked_u32(seq.channels, "C"));
  for (double v : seq.values) out.f32(checked_f32(v, path.string()));
  out.save(path);
}

std::vector<double> read_embedding(const fs::path& path) {
  auto in = detail::ByteReader::load(path);
  in.expect_magic(kEmbeddingMagic);
  const auto version = in.u32();
  if (version != kFormatVersion) {
    throw DataError(path.string() + ": unsupported version " + std::to_string(version));
  }
  const std::size_t dim = in.u32();
  if (dim == 0) throw DataError(path.string() + ": zero dimension");
  if (in.remaining() != dim * sizeof(float)) throw DataError(path.string() + ": truncated payload");
  std::vector<double> v(dim);
  for (auto& x : v) {
    const float f = in.f32();
    if (!std::isfinite(f)) throw DataError(path.string() + ": non-finite value");
    x = f;
  }
  return v;
}

void write_embedding(std::span<const double> vector, const fs::path& path) {
  if (vector.empty()) throw std::invalid_argument("embedding is empty");
  detail::ByteWriter out;
  out.bytes(kEmbeddingMagic.data(), 4);
  out.u32(kFormatVersion);
  out.u32(checked_u32(vector.size(), "D_s"));
  for (double v : vector) out.f32(checked_f32(v, path.string()));
  out.save(path);
}

ClassSplit read_split(const fs::path& path) {
  const json doc = read_json(path);
  ClassSplit split;
  try {
    split.seen = doc.at("seen").get<std::vector<int>>();
    split.unseen = doc.at("unseen").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  std::sort(split.seen.begin(), split.seen.end());
  std::sort(split.unseen.begin(), split.unseen.end());
  split.validate();
  return split;
}

void write_split(const ClassSplit& split, const fs::path& path) {
  split.validate();
  write_json(json{{"seen", split.seen}, {"unseen", split.unseen}}, path);
}

// ---- preprocessing ---------------------------------------------------------

std::vector<double> l2_normalize(std::span<const double> vector) {
  double sq = 0.0;
  for (double v : vector) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw std::invalid_argument("l2_normalize: cannot normalize a zero or non-finite vector");
  }
  std::vector<double> out(vector.begin(), vector.end());
  for (auto& v : out) v /= norm;
  return out;
}

SkeletonSequence drop_invalid_frames(const SkeletonSequence& seq) {
  SkeletonSequence out(0, seq.joints, seq.channels);
  for (std::size_t k = 0; k < seq.frames; ++k) {
    const auto f = seq.frame(k);
    if (std::all_of(f.begin(), f.end(), [](double v) { return v == 0.0; })) continue;
    out.values.insert(out.values.end(), f.begin(), f.end());
    ++out.frames;
  }
  if (out.frames == 0) throw DataError("drop_invalid_frames: every frame is invalid");
  return out;
}

SkeletonSequence resample_time(const SkeletonSequence& seq, std::size_t target_frames) {
  if (seq.frames == 0) throw std::invalid_argument("resample_time: empty sequence");
  if (target_frames == 0) throw std::invalid_argument("resample_time: target must be positive");
  SkeletonSequence out(target_frames, seq.joints, seq.channels);
  const std::size_t width = seq.frame_size();
  for (std::size_t t = 0; t < target_frames; ++t) {
    auto dst = out.frame(t);
    if (seq.frames == 1 || target_frames == 1) {
      const auto src = seq.frame(0);
      std::copy(src.begin(), src.end(), dst.begin());
      continue;
    }
    const double pos = static_cast<double>(t) * static_cast<double>(seq.frames - 1) /
                       static_cast<double>(target_frames - 1);
    const auto lo = std::min(static_cast<std::size_t>(pos), seq.frames - 1);
    const std::size_t hi = std::min(lo + 1, seq.frames - 1);
    const double w = pos - static_cast<double>(lo);
    const auto a = seq.frame(lo);
    const auto b = seq.frame(hi);
    for (std::size_t i = 0; i < width; ++i) {
      dst[i] = w == 0.0 ? a[i] : (1.0 - w) * a[i] + w * b[i];
    }
  }
  return out;
}

SkeletonSequence preprocess(const SkeletonSequence& seq, std::size_t target_frames) {
  return resample_time(drop_invalid_frames(seq), target_frames);
}

std::vector<ClassSplit> make_splits(const DatasetManifest& manifest, std::size_t n_unseen,
                                    std::size_t n_folds, std::uint64_t seed) {
  const auto ids = manifest.class_ids();
  if (n_unseen == 0) throw ConfigError("make_splits: n_unseen must be positive");
  if (n_unseen >= ids.size()) {
    throw ConfigError("make_splits: n_unseen (" + std::to_string(n_unseen) +
                      ") must be smaller than the class count (" + std::to_string(ids.size()) +
                      ")");
  }
  if (n_folds == 0) throw ConfigError("make_splits: n_folds must be at least 1");

  Rng rng(seed);
  std::vector<ClassSplit> splits;
  for (std::size_t f = 0; f < n_folds; ++f) {
    auto pool = ids;
    // partial Fisher-Yates: the first n_unseen slots become the unseen set
    for (std::size_t i = 0; i < n_unseen; ++i) {
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    }
    ClassSplit s;
    s.unseen.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_unseen));
    s.seen.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_unseen), pool.end());
    std::sort(s.seen.begin(), s.seen.end());
    std::sort(s.unseen.begin(), s.unseen.end());
    splits.push_back(std::move(s));
  }
  return splits;
}

// ---- loading ---------------------------------------------------------------

std::vector<LabeledSequence> load_samples(const DatasetManifest& manifest,
                                          std::span<const int> classes, Subset role) {
  const std::set<int> wanted(classes.begin(), classes.end());
  std::vector<const SampleEntry*> entries;
  for (const auto& s : manifest.samples) {
    if (!wanted.count(s.class_id)) continue;
    if (s.subset != Subset::kAll && role != Subset::kAll && s.subset != role) continue;
    entries.push_back(&s);
  }
  std::sort(entries.begin(), entries.end(),
            [](const SampleEntry* a, const SampleEntry* b) { return a->id < b->id; });
  std::vector<LabeledSequence> out;
  out.reserve(entries.size());
  for (const auto* e : entries) {
    out.push_back({e->id, e->class_id, read_skeleton(manifest.root / e->skeleton)});
  }
  return out;
}

std::vector<SemanticEmbedding> load_embeddings(const DatasetManifest& manifest,
                                               std::span<const int> classes) {
  std::vector<SemanticEmbedding> out;
  for (int id : classes) {
    const auto* c = manifest.find_class(id);
    if (!c) throw DataError("unknown class_id " + std::to_string(id));
    out.push_back({id, l2_normalize(read_embedding(manifest.root / c->embedding))});
  }
  return out;
}

}  // namespace smie
