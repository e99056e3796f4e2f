// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "smie/checkpoint.hpp"
#include "smie/data.hpp"
#include "smie/nn.hpp"
#include "smie/tensor.hpp"

namespace smie {

/// Frozen per-frame visual feature extractor: linear-ReLU-linear applied to
/// each flattened J*C frame, followed by temporal mean pooling and a
/// parameter-free layer norm.
struct FrameEncoderParams {
  LinearParams linear1;  // J*C -> hidden
  LinearParams linear2;  // hidden -> D_v
  bool frozen = false;

  std::size_t input_dim() const { return linear1.in(); }
  std::size_t feature_dim() const { return linear2.out(); }
  bool operator==(const FrameEncoderParams&) const = default;
};

FrameEncoderParams init_encoder(std::size_t input_dim, std::size_t hidden, std::size_t feature_dim,
                                std::uint64_t seed);

/// K x D_v frame features; frames are encoded independently.
Matrix encode_frames(const FrameEncoderParams& params, const SkeletonSequence& seq);

/// (x - mean) / sqrt(popvar + eps), no learnable scale or shift.
std::vector<double> layer_norm(std::span<const double> x, double eps = 1e-5);

/// Gradient of layer_norm(x) given dLoss/dOutput.
std::vector<double> layer_norm_backward(std::span<const double> x, std::span<const double> upstream,
                                        double eps = 1e-5);

/// Temporal mean over rows, then layer_norm.
std::vector<double> pool_and_norm(const Matrix& frame_features);

/// encode_frames followed by pool_and_norm.
std::vector<double> encode_sequence(const FrameEncoderParams& params, const SkeletonSequence& seq);

struct PretrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  std::size_t hidden = 128;
  std::size_t feature_dim = 64;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  FrameEncoderParams params;           // frozen
  std::vector<double> epoch_loss;      // mean cross-entropy per epoch
  double train_accuracy = 0.0;         // of the discarded head, after the last epoch
};

/// Trains encoder + a temporary linear head (D_v -> |seen|) with softmax
/// cross-entropy on preprocessed seen-class sequences, then discards the head.
/// Every sample's class must be listed in `seen_classes`.
PretrainResult pretrain_encoder(std::span<const LabeledSequence> samples,
                                std::span<const int> seen_classes, const PretrainConfig& config);

Checkpoint encoder_to_checkpoint(const FrameEncoderParams& params);
FrameEncoderParams encoder_from_checkpoint(const Checkpoint& ck);

}  // namespace smie
