// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

namespace smie {

struct LossGradCheckOptions {
  std::size_t visual_dim = 8;
  std::size_t semantic_dim = 4;
  std::size_t hidden1 = 16;
  std::size_t hidden2 = 8;
  std::size_t batch = 8;
  double beta = 0.1;
  double lambda = 0.5;
  double h = 1e-5;
  /// Minimum |pre-activation| and |beta - (m - m_hat)| accepted at the probe point.
  double relu_margin = 1e-3;
  double hinge_margin = 1e-6;
};

struct LossGradCheckReport {
  double max_relative_error = 0.0;
  std::size_t parameters = 0;
  std::size_t resamples = 0;  // draws rejected for sitting near a kink
  bool hinge_active = false;
};

/// Finite-difference check of the full training loss L = L1 + lambda * L2
/// with respect to every estimator parameter, on a random batch drawn from
/// `seed`. Points near a ReLU or hinge kink are redrawn.
LossGradCheckReport check_loss_gradient(std::uint64_t seed, const LossGradCheckOptions& options = {});

}  // namespace smie
