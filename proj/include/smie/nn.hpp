// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "smie/checkpoint.hpp"
#include "smie/rng.hpp"
#include "smie/tensor.hpp"

namespace smie {

struct LinearParams {
  Matrix weight;  // out x in
  std::vector<double> bias;

  std::size_t in() const { return weight.cols; }
  std::size_t out() const { return weight.rows; }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }
  bool operator==(const LinearParams&) const = default;
};

/// Uniform in +-sqrt(6 / fan_in), zero bias.
LinearParams init_linear(std::size_t in, std::size_t out, Rng& rng);

void add_linear(Checkpoint& ck, const std::string& name, const LinearParams& p);
/// Throws DataError when the tensors are missing or inconsistent.
LinearParams read_linear(const Checkpoint& ck, const std::string& name);

/// Layer widths of the connection network; the output width is always 1.
struct Mlp3Dims {
  std::size_t input = 0;
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 256;
};

/// The connection network: linear-ReLU-linear-ReLU-linear, scalar output.
struct Mlp3Params {
  LinearParams layer1, layer2, layer3;

  Mlp3Dims dims() const { return {layer1.in(), layer1.out(), layer2.out()}; }
  std::size_t parameter_count() const {
    return layer1.parameter_count() + layer2.parameter_count() + layer3.parameter_count();
  }
  bool operator==(const Mlp3Params&) const = default;
};

Mlp3Params init_mlp3(const Mlp3Dims& dims, std::uint64_t seed);

/// Activations kept by mlp_forward for the backward pass.
struct Mlp3Cache {
  Matrix input, pre1, act1, pre2, act2;
};

/// Scores for each row of `batch`. Fills `cache` when non-null.
std::vector<double> mlp_forward(const Mlp3Params& params, const Matrix& batch,
                                Mlp3Cache* cache = nullptr);

struct Mlp3Grads {
  Mlp3Params params;  // same shapes as the network
  Matrix input;
};

/// Reverse-mode gradients given dLoss/dscore for every row.
Mlp3Grads mlp_backward(const Mlp3Params& params, const Mlp3Cache& cache,
                       std::span<const double> upstream);

// Flat views in a fixed order (layer1.w, layer1.b, layer2.w, ...), used by
// the optimizer, gradient checks and checkpoints.
std::vector<std::span<double>> tensors(Mlp3Params& p);
std::vector<std::span<const double>> tensors(const Mlp3Params& p);
std::vector<std::string> tensor_names(const std::string& prefix = "");
std::vector<double> flatten(const Mlp3Params& p);
void unflatten(std::span<const double> flat, Mlp3Params& p);

// ---- optimization ----------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;

  /// Zeroed moments matching the given parameter tensors.
  static AdamState zeros_like(std::span<const std::span<const double>> params,
                              AdamConfig config = {});
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update. Throws NumericError on a non-finite
/// gradient, leaving parameters and state untouched.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state, double lr);

struct CosineSchedule {
  double base_lr = 1e-4;
  std::size_t total_epochs = 100;

  /// 0.5 * base_lr * (1 + cos(pi * epoch / total_epochs)), epoch in [0, total].
  double lr(std::size_t epoch) const;
};

// ---- verification ----------------------------------------------------------

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = false;
};

/// Central-difference check of `analytic` against `loss` around `point`.
/// Relative error per coordinate is |a - n| / max(1e-8, |a| + |n|).
GradCheckResult grad_check(const std::function<double(std::span<const double>)>& loss,
                           std::span<const double> point, std::span<const double> analytic,
                           double h, double tolerance);

}  // namespace smie
