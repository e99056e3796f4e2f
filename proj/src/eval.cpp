// SPDX-License-Identifier: Apache-2.0
#include "smie/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "smie/errors.hpp"

namespace smie {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// JSON numbers rounded to the same six decimals as the CSV files
double round6(double v) { return std::round(v * 1e6) / 1e6; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

}  // namespace

double score(const Mlp3Params& model, std::span<const double> visual,
             std::span<const double> semantic) {
  if (visual.size() + semantic.size() != model.layer1.in()) {
    throw std::invalid_argument("score: D_v + D_s does not match the model input");
  }
  Matrix x(1, visual.size() + semantic.size());
  std::copy(visual.begin(), visual.end(), x.data.begin());
  std::copy(semantic.begin(), semantic.end(),
            x.data.begin() + static_cast<std::ptrdiff_t>(visual.size()));
  return mlp_forward(model, x)[0];
}

std::vector<double> score_all(const Mlp3Params& model, std::span<const double> visual,
                              std::span<const SemanticEmbedding> candidates) {
  if (candidates.empty()) return {};
  const std::size_t width = model.layer1.in();
  Matrix x(candidates.size(), width);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (visual.size() + candidates[i].vector.size() != width) {
      throw std::invalid_argument("score_all: D_v + D_s does not match the model input");
    }
    auto row = x.row(i);
    std::copy(visual.begin(), visual.end(), row.begin());
    std::copy(candidates[i].vector.begin(), candidates[i].vector.end(),
              row.begin() + static_cast<std::ptrdiff_t>(visual.size()));
  }
  return mlp_forward(model, x);
}

int argmax_class(std::span<const double> scores, std::span<const int> class_ids) {
  if (scores.empty() || scores.size() != class_ids.size()) {
    throw std::invalid_argument("argmax_class: need one score per (non-empty) class list");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best] || (scores[i] == scores[best] && class_ids[i] < class_ids[best])) {
      best = i;
    }
  }
  return class_ids[best];
}

int predict(const Mlp3Params& model, std::span<const double> visual,
            std::span<const SemanticEmbedding> unseen) {
  if (unseen.empty()) throw std::invalid_argument("predict: empty unseen set");
  const auto scores = score_all(model, visual, unseen);
  std::vector<int> ids;
  for (const auto& e : unseen) ids.push_back(e.class_id);
  return argmax_class(scores, ids);
}

EvalReport evaluate_features(std::span<const EvalSample> test,
                             std::span<const SemanticEmbedding> unseen, const BatchScorer& scorer) {
  if (unseen.empty()) throw std::invalid_argument("evaluate: empty unseen set");
  if (test.empty()) throw DataError("evaluate: no unseen test samples");

  std::vector<SemanticEmbedding> candidates(unseen.begin(), unseen.end());
  std::sort(candidates.begin(), candidates.end(),
            [](const auto& a, const auto& b) { return a.class_id < b.class_id; });
  EvalReport r;
  for (const auto& c : candidates) r.classes.push_back(c.class_id);
  const std::size_t u = r.classes.size();
  auto index_of = [&](int id) {
    const auto it = std::lower_bound(r.classes.begin(), r.classes.end(), id);
    if (it == r.classes.end() || *it != id) {
      throw DataError("evaluate: class " + std::to_string(id) + " is not an unseen class");
    }
    return static_cast<std::size_t>(it - r.classes.begin());
  };

  r.confusion.assign(u, std::vector<std::size_t>(u, 0));
  r.samples.resize(test.size());
  const auto n = static_cast<std::ptrdiff_t>(test.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& t = test[static_cast<std::size_t>(i)];
      auto& row = r.samples[static_cast<std::size_t>(i)];
      row.sample_id = t.sample_id;
      row.true_class = t.class_id;
      row.scores = scorer(t.visual, candidates);
      row.predicted_class = argmax_class(row.scores, r.classes);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::sort(r.samples.begin(), r.samples.end(),
            [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });

  std::size_t correct = 0;
  for (int id : r.classes) r.per_class[id] = {};
  for (const auto& s : r.samples) {
    const std::size_t t = index_of(s.true_class), p = index_of(s.predicted_class);
    ++r.confusion[t][p];
    auto& pc = r.per_class[s.true_class];
    ++pc.count;
    if (t == p) {
      ++pc.correct;
      ++correct;
    }
  }
  for (auto& [id, pc] : r.per_class) {
    pc.accuracy = pc.count ? static_cast<double>(pc.correct) / static_cast<double>(pc.count) : 0.0;
  }
  r.total = r.samples.size();
  r.top1_accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
  return r;
}

EvalReport evaluate(const Mlp3Params& model, const DatasetManifest& manifest,
                    const ClassSplit& split, const FrameEncoderParams& encoder,
                    std::size_t frames) {
  split.validate(manifest.class_ids());
  const auto unseen = load_embeddings(manifest, split.unseen);
  const auto raw = load_samples(manifest, split.unseen, Subset::kTest);
  if (raw.empty()) throw DataError("evaluate: no unseen test samples");
  std::vector<EvalSample> test(raw.size());
  const auto n = static_cast<std::ptrdiff_t>(raw.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& s = raw[static_cast<std::size_t>(i)];
      test[static_cast<std::size_t>(i)] = {s.sample_id, s.class_id,
                                           encode_sequence(encoder, preprocess(s.sequence, frames))};
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return evaluate_features(test, unseen,
                           [&model](std::span<const double> v, std::span<const SemanticEmbedding> c) {
                             return score_all(model, v, c);
                           });
}

void export_reports(const EvalReport& report, const std::map<int, std::string>& class_names,
                    const fs::path& out_dir, const std::string& extra_summary) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create report directory " + out_dir.string());
  auto name_of = [&](int id) {
    const auto it = class_names.find(id);
    return it == class_names.end() ? std::to_string(id) : it->second;
  };

  {
    auto out = open_out(out_dir / "confusion.csv");
    out << "true\\predicted";
    for (int id : report.classes) out << ',' << csv_field(name_of(id));
    out << '\n';
    for (std::size_t t = 0; t < report.classes.size(); ++t) {
      out << csv_field(name_of(report.classes[t]));
      for (auto c : report.confusion[t]) out << ',' << c;
      out << '\n';
    }
  }
  {
    auto out = open_out(out_dir / "per_class.csv");
    out << "class_id,name,count,correct,accuracy\n";
    for (const auto& [id, pc] : report.per_class) {
      out << id << ',' << csv_field(name_of(id)) << ',' << pc.count << ',' << pc.correct << ','
          << fixed6(pc.accuracy) << '\n';
    }
  }
  {
    auto out = open_out(out_dir / "scores.csv");
    out << "sample_id,true_class,predicted_class";
    for (int id : report.classes) out << ",score_" << id;
    out << '\n';
    for (const auto& s : report.samples) {
      out << s.sample_id << ',' << s.true_class << ',' << s.predicted_class;
      for (double v : s.scores) out << ',' << fixed6(v);
      out << '\n';
    }
  }
  {
    json summary;
    summary["top1_accuracy"] = round6(report.top1_accuracy);
    summary["total"] = report.total;
    summary["unseen_classes"] = report.classes;
    json per_class = json::object();
    for (const auto& [id, pc] : report.per_class) per_class[std::to_string(id)] = round6(pc.accuracy);
    summary["per_class_accuracy"] = per_class;
    const json extra = json::parse(extra_summary);
    for (const auto& [k, v] : extra.items()) summary[k] = v;
    auto out = open_out(out_dir / "summary.json");
    out << summary.dump(2) << '\n';
  }
}

}  // namespace smie
