// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "smie/checkpoint.hpp"
#include "smie/data.hpp"
#include "smie/encoder.hpp"
#include "smie/mi.hpp"
#include "smie/nn.hpp"

namespace smie {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double beta = 0.1;
  double lambda = 0.5;
  /// Keyframes masked per sequence; 0 disables masking. Negative means
  /// default_keyframe_count(frames).
  long keyframes = -1;
  std::size_t frames = 50;
  std::uint64_t seed = 0;
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 256;
  std::size_t shift = 1;
  /// Samples in the per-epoch InfoNCE diagnostic matrix (capped by the cache),
  /// taken at even strides through the cache.
  std::size_t diag_batch = 32;

  std::size_t resolved_keyframes() const;
  LossConfig loss() const { return {beta, lambda}; }
  /// Throws ConfigError on violated invariants.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Reads only the keys present; unknown keys raise ConfigError.
void update_from_json(TrainConfig& c, const nlohmann::json& j);

/// One training example with its full and attention-masked visual features.
struct FeatureRecord {
  int sample_id = 0;
  int class_id = 0;
  std::vector<double> visual;
  std::vector<double> masked_visual;
};

struct FeatureCache {
  std::vector<FeatureRecord> records;               // ascending sample id
  std::map<int, std::vector<double>> semantic;      // L2-normalized, by class id
  std::size_t visual_dim = 0;
  std::size_t semantic_dim = 0;
};

/// Preprocesses (drop invalid frames, resample), masks the top keyframes and
/// encodes both versions with the frozen encoder.
FeatureCache precompute_features(std::span<const LabeledSequence> samples,
                                 std::span<const SemanticEmbedding> semantic,
                                 const FrameEncoderParams& encoder, std::size_t frames,
                                 std::size_t keyframes);

/// Loads the seen-class training samples of `split` and builds their cache.
FeatureCache precompute_features(const DatasetManifest& manifest, const ClassSplit& split,
                                 const FrameEncoderParams& encoder, const TrainConfig& config);

struct NegativePairs {
  std::vector<int> partners;   // partners[i] = ids[(i + shift) % B]
  std::size_t collisions = 0;  // positions whose partner has the same class
};

/// Batch-shift negatives. `classes` may be empty, in which case no
/// collisions are counted.
NegativePairs make_negatives(std::span<const int> ids, std::span<const int> classes,
                             std::size_t shift = 1);

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double m = 0.0;
  double m_hat = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double loss = 0.0;
  double infonce_bound = 0.0;
  std::size_t collisions = 0;
  std::size_t batches = 0;

  bool operator==(const EpochMetrics&) const = default;
};

struct TrainState {
  Mlp3Params estimator;
  AdamState adam;
  std::size_t epoch = 0;  // epochs completed
  std::uint64_t seed = 0;
  std::vector<EpochMetrics> history;

  bool operator==(const TrainState&) const = default;
};

TrainState init_train_state(const FeatureCache& cache, const TrainConfig& config);

/// One pass over the cache: shuffle, batch, score, backprop into the
/// estimator only and step Adam at `lr`.
EpochMetrics train_epoch(TrainState& state, const FeatureCache& cache, const TrainConfig& config,
                         double lr);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Continues `state` until config.epochs epochs are complete.
void train(TrainState& state, const FeatureCache& cache, const TrainConfig& config,
           const EpochCallback& on_epoch = {});

/// Builds the pair matrix rows visual[i] ++ semantic[i].
Matrix concat_pairs(std::span<const std::vector<double>* const> visual,
                    std::span<const std::vector<double>* const> semantic);

Checkpoint train_state_to_checkpoint(const TrainState& state);
TrainState train_state_from_checkpoint(const Checkpoint& ck);
/// Estimator weights only; works on any checkpoint written by the trainer.
Mlp3Params estimator_from_checkpoint(const Checkpoint& ck);

/// epoch,lr,m,m_hat,L1,L2,L,infonce_bound with six decimals.
void write_metrics_csv(std::span<const EpochMetrics> history, const std::filesystem::path& path);

}  // namespace smie
