// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <numbers>

#include "smie/data.hpp"
#include "smie/errors.hpp"
#include "smie/rng.hpp"

namespace smie {

namespace fs = std::filesystem;

namespace {

// Stream tags for mix_seed; each concern draws from its own generator.
constexpr std::uint64_t kSemanticStream = 1;
constexpr std::uint64_t kProjectionStream = 2;
constexpr std::uint64_t kNoiseStreamBase = 1000;

std::string numbered(const char* prefix, int id, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%05d%s", prefix, id, ext);
  return buf;
}

/// Class dynamics derived from the semantic vector by fixed projections.
struct ClassMotion {
  std::vector<double> amplitude;  // J*C
  std::vector<double> phase;      // J*C
  double frequency = 1.0;         // cycles per sequence, in [1, 4]
};

struct Projections {
  std::vector<double> basis;      // D_s x r, orthonormal columns
  std::vector<double> amplitude;  // (J*C) x D_s
  std::vector<double> phase;      // (J*C) x D_s
  std::vector<double> frequency;  // D_s
};

Projections draw_projections(const SynthConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, kProjectionStream));
  const std::size_t width = cfg.joints * cfg.channels;
  const std::size_t d = cfg.semantic_dim, r = cfg.latent_dim;
  Projections p;
  p.basis.resize(d * r);
  for (auto& v : p.basis) v = rng.normal();
  // modified Gram-Schmidt over the columns
  for (std::size_t c = 0; c < r; ++c) {
    for (std::size_t prev = 0; prev < c; ++prev) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += p.basis[i * r + c] * p.basis[i * r + prev];
      for (std::size_t i = 0; i < d; ++i) p.basis[i * r + c] -= dot * p.basis[i * r + prev];
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) norm += p.basis[i * r + c] * p.basis[i * r + c];
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < d; ++i) p.basis[i * r + c] /= norm;
  }
  p.amplitude.resize(width * d);
  p.phase.resize(width * d);
  p.frequency.resize(d);
  for (auto& v : p.amplitude) v = rng.normal();
  for (auto& v : p.phase) v = rng.normal();
  for (auto& v : p.frequency) v = rng.normal();
  return p;
}

/// Uniform on the unit sphere of the subspace spanned by the basis columns.
std::vector<double> draw_semantic(const Projections& p, std::size_t semantic_dim, Rng& rng) {
  const std::size_t r = p.basis.size() / semantic_dim;
  std::vector<double> z(r);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (auto& v : z) {
      v = rng.normal();
      sq += v * v;
    }
  } while (!(sq > 0.0));
  std::vector<double> a(semantic_dim, 0.0);
  for (std::size_t i = 0; i < semantic_dim; ++i) {
    for (std::size_t k = 0; k < r; ++k) a[i] += p.basis[i * r + k] * z[k];
  }
  return l2_normalize(a);
}

ClassMotion derive_motion(const Projections& p, std::span<const double> semantic,
                          std::size_t width) {
  const std::size_t d = semantic.size();
  ClassMotion m;
  m.amplitude.resize(width);
  m.phase.resize(width);
  for (std::size_t i = 0; i < width; ++i) {
    double amp = 0.0, ph = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      amp += p.amplitude[i * d + k] * semantic[k];
      ph += p.phase[i * d + k] * semantic[k];
    }
    m.amplitude[i] = 1.0 + 0.5 * amp;
    m.phase[i] = 0.25 * std::numbers::pi * ph;
  }
  double f = 0.0;
  for (std::size_t k = 0; k < d; ++k) f += p.frequency[k] * semantic[k];
  m.frequency = 1.0 + 3.0 / (1.0 + std::exp(-2.0 * f));
  return m;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_classes < 2) throw ConfigError("synth: n_classes must be at least 2");
  if (n_seen == 0 || n_seen >= n_classes) {
    throw ConfigError("synth: n_seen must satisfy 0 < n_seen < n_classes");
  }
  if (samples_per_class_train == 0 || samples_per_class_test == 0) {
    throw ConfigError("synth: per-class sample counts must be positive");
  }
  if (frames == 0 || joints == 0 || channels == 0 || semantic_dim == 0 || latent_dim == 0) {
    throw ConfigError("synth: dimensions must be positive");
  }
  if (latent_dim > semantic_dim) throw ConfigError("synth: latent_dim cannot exceed semantic_dim");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("synth: noise_sigma must be finite and non-negative");
  }
}

SynthResult generate_synthetic(const SynthConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "embeddings", ec);
  fs::create_directories(out_dir / "skeletons", ec);
  if (ec) throw IoError("cannot create dataset directories under " + out_dir.string());

  const std::size_t width = cfg.joints * cfg.channels;
  const auto projections = draw_projections(cfg);
  Rng semantic_rng(mix_seed(cfg.seed, kSemanticStream));

  SynthResult result;
  auto& manifest = result.manifest;
  manifest.root = out_dir;
  int next_sample = 0;
  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    const int class_id = static_cast<int>(c);
    const auto semantic = draw_semantic(projections, cfg.semantic_dim, semantic_rng);

    const fs::path emb_rel = fs::path("embeddings") / numbered("class_", class_id, ".smem");
    write_embedding(semantic, out_dir / emb_rel);
    manifest.classes.push_back({class_id, numbered("class_", class_id, ""), emb_rel});

    const auto motion = derive_motion(projections, semantic, width);
    const std::size_t total = cfg.samples_per_class_train + cfg.samples_per_class_test;
    for (std::size_t s = 0; s < total; ++s) {
      const int sample_id = next_sample++;
      Rng noise(mix_seed(cfg.seed, kNoiseStreamBase + static_cast<std::uint64_t>(sample_id)));
      SkeletonSequence seq(cfg.frames, cfg.joints, cfg.channels);
      for (std::size_t k = 0; k < cfg.frames; ++k) {
        const double t = 2.0 * std::numbers::pi * motion.frequency * static_cast<double>(k) /
                         static_cast<double>(cfg.frames);
        auto frame = seq.frame(k);
        for (std::size_t i = 0; i < width; ++i) {
          frame[i] = motion.amplitude[i] * std::sin(t + motion.phase[i]) +
                     cfg.noise_sigma * noise.normal();
        }
      }
      const fs::path rel = fs::path("skeletons") / numbered("sample_", sample_id, ".smsk");
      write_skeleton(seq, out_dir / rel);
      manifest.samples.push_back({sample_id, class_id, rel,
                                  s < cfg.samples_per_class_train ? Subset::kTrain
                                                                  : Subset::kTest});
    }
  }
  write_manifest(manifest, out_dir / "manifest.json");

  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    (c < cfg.n_seen ? result.split.seen : result.split.unseen).push_back(static_cast<int>(c));
  }
  write_split(result.split, out_dir / "split.json");
  return result;
}

}  // namespace smie
