// SPDX-License-Identifier: Apache-2.0
#include "smie/mi.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace smie {

namespace {

double mean(std::span<const double> xs, double (*f)(double)) {
  double acc = 0.0;
  for (double x : xs) acc += f(x);
  return acc / static_cast<double>(xs.size());
}

double neg_softplus_neg(double z) { return -softplus(-z); }

void require_scores(std::span<const double> a, std::span<const double> b, const char* who) {
  if (a.empty() || b.empty()) throw std::invalid_argument(std::string(who) + ": empty score array");
}

}  // namespace

double softplus(double z) {
  if (z > 30.0) return z + std::log1p(std::exp(-z));
  if (z < -30.0) return std::exp(z);  // log1p(e^z) == e^z to double precision
  return std::log1p(std::exp(z));
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double jsd_mi(std::span<const double> pos_scores, std::span<const double> neg_scores) {
  require_scores(pos_scores, neg_scores, "jsd_mi");
  return mean(pos_scores, neg_softplus_neg) - mean(neg_scores, softplus);
}

double temporal_mi(std::span<const double> masked_pos_scores, std::span<const double> neg_scores) {
  require_scores(masked_pos_scores, neg_scores, "temporal_mi");
  return mean(masked_pos_scores, neg_softplus_neg) - mean(neg_scores, softplus);
}

double hinge_loss(double m, double m_hat, double beta) {
  if (beta < 0.0) throw std::invalid_argument("hinge_loss: beta must be non-negative");
  return std::max(0.0, beta - (m - m_hat));
}

void LossConfig::validate() const {
  if (!(beta >= 0.0) || !(lambda >= 0.0)) {
    throw std::invalid_argument("loss config: beta and lambda must be non-negative");
  }
}

MiBatchResult evaluate_loss(std::span<const double> pos, std::span<const double> masked_pos,
                            std::span<const double> neg, const LossConfig& config) {
  config.validate();
  MiBatchResult r;
  r.m = jsd_mi(pos, neg);
  r.m_hat = temporal_mi(masked_pos, neg);
  r.l1 = global_loss(r.m);
  r.l2 = hinge_loss(r.m, r.m_hat, config.beta);
  r.hinge_active = config.beta - (r.m - r.m_hat) >= 0.0;
  r.loss = total_loss(r.l1, r.l2, config.lambda);
  r.pos_scores.assign(pos.begin(), pos.end());
  r.masked_pos_scores.assign(masked_pos.begin(), masked_pos.end());
  r.neg_scores.assign(neg.begin(), neg.end());
  return r;
}

ScoreGradients loss_score_gradients(std::span<const double> pos,
                                    std::span<const double> masked_pos,
                                    std::span<const double> neg, const LossConfig& config) {
  require_scores(pos, neg, "loss_score_gradients");
  require_scores(masked_pos, neg, "loss_score_gradients");
  config.validate();
  const double m = jsd_mi(pos, neg);
  const double m_hat = temporal_mi(masked_pos, neg);
  const double active = config.beta - (m - m_hat) >= 0.0 ? config.lambda : 0.0;
  const double n_pos = static_cast<double>(pos.size());
  const double n_masked = static_cast<double>(masked_pos.size());
  const double n_neg = static_cast<double>(neg.size());

  // L = -m + active * (beta - m + m_hat)
  //   dm/dg = logistic(-g)/N, dm/dg' = -logistic(g')/M, and likewise for m_hat.
  // The negative terms of m and m_hat cancel inside the hinge.
  ScoreGradients g;
  g.pos.resize(pos.size());
  g.masked_pos.resize(masked_pos.size());
  g.neg.resize(neg.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    g.pos[i] = -(1.0 + active) * logistic(-pos[i]) / n_pos;
  }
  for (std::size_t i = 0; i < masked_pos.size(); ++i) {
    g.masked_pos[i] = active * logistic(-masked_pos[i]) / n_masked;
  }
  for (std::size_t j = 0; j < neg.size(); ++j) {
    g.neg[j] = logistic(neg[j]) / n_neg;
  }
  return g;
}

InfoNceDiagnostic infonce_diagnostic(const Matrix& scores) {
  if (scores.rows != scores.cols) throw std::invalid_argument("infonce_diagnostic: not square");
  if (scores.rows < 2) throw std::invalid_argument("infonce_diagnostic: needs B >= 2");
  const std::size_t b = scores.rows;
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto row = scores.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double s : row) z += std::exp(s - mx);
    total += -(row[i] - mx - std::log(z));
  }
  InfoNceDiagnostic d;
  d.loss = total / static_cast<double>(b);
  d.bound = std::log(static_cast<double>(b)) - d.loss;
  return d;
}

}  // namespace smie
