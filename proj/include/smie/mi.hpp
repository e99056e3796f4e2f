// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "smie/tensor.hpp"

namespace smie {

/// log(1 + e^z) without overflow or underflow.
double softplus(double z);
/// 1 / (1 + e^-z), the derivative of softplus.
double logistic(double z);

/// Jensen-Shannon MI estimate: mean(-softplus(-pos)) - mean(softplus(neg)).
double jsd_mi(std::span<const double> pos_scores, std::span<const double> neg_scores);

/// L1 = -m.
inline double global_loss(double m) { return -m; }

/// Same estimator with masked-sequence positives and the unchanged negatives.
double temporal_mi(std::span<const double> masked_pos_scores, std::span<const double> neg_scores);

/// L2 = max(0, beta - (m - m_hat)).
double hinge_loss(double m, double m_hat, double beta);

/// L = L1 + lambda * L2.
inline double total_loss(double l1, double l2, double lambda) { return l1 + lambda * l2; }

struct LossConfig {
  double beta = 0.1;
  double lambda = 0.5;

  void validate() const;
};

struct MiBatchResult {
  double m = 0.0;
  double m_hat = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double loss = 0.0;
  /// beta - (m - m_hat) >= 0; the kink itself counts as active.
  bool hinge_active = false;
  std::vector<double> pos_scores, masked_pos_scores, neg_scores;
};

MiBatchResult evaluate_loss(std::span<const double> pos, std::span<const double> masked_pos,
                            std::span<const double> neg, const LossConfig& config);

struct ScoreGradients {
  std::vector<double> pos, masked_pos, neg;
};

/// Exact dL/dscore for every positive, masked-positive and negative score.
ScoreGradients loss_score_gradients(std::span<const double> pos,
                                    std::span<const double> masked_pos,
                                    std::span<const double> neg, const LossConfig& config);

struct InfoNceDiagnostic {
  double loss = 0.0;   // L_S
  double bound = 0.0;  // log B - L_S
};

/// `scores(i, j)` is the critic score of visual j with semantic i; the
/// diagonal holds the matched pairs. Requires a square matrix with B >= 2.
InfoNceDiagnostic infonce_diagnostic(const Matrix& scores);

}  // namespace smie
