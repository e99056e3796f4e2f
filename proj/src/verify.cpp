// SPDX-License-Identifier: Apache-2.0
#include "smie/verify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "smie/encoder.hpp"
#include "smie/mi.hpp"
#include "smie/nn.hpp"
#include "smie/rng.hpp"
#include "smie/train.hpp"

namespace smie {

namespace {

struct Problem {
  Matrix pairs;  // 3B rows: positives, masked positives, negatives
  Mlp3Params params;
};

Problem draw_problem(Rng& rng, const LossGradCheckOptions& o) {
  std::vector<std::vector<double>> vis(o.batch), masked(o.batch), sem(o.batch);
  for (std::size_t i = 0; i < o.batch; ++i) {
    std::vector<double> v(o.visual_dim), a(o.semantic_dim);
    for (auto& x : v) x = rng.normal();
    for (auto& x : a) x = rng.normal();
    vis[i] = layer_norm(v);
    for (auto& x : v) x += 0.5 * rng.normal();
    masked[i] = layer_norm(v);
    sem[i] = l2_normalize(a);
  }
  std::vector<const std::vector<double>*> pv, ps;
  for (std::size_t i = 0; i < o.batch; ++i) pv.push_back(&vis[i]);
  for (std::size_t i = 0; i < o.batch; ++i) pv.push_back(&masked[i]);
  for (std::size_t i = 0; i < o.batch; ++i) pv.push_back(&vis[(i + 1) % o.batch]);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < o.batch; ++i) ps.push_back(&sem[i]);
  }
  Problem p;
  p.pairs = concat_pairs(pv, ps);
  p.params = init_mlp3({o.visual_dim + o.semantic_dim, o.hidden1, o.hidden2}, rng.next_u64());
  // non-zero biases so every term of the gradient is exercised
  for (auto t : {std::span<double>(p.params.layer1.bias), std::span<double>(p.params.layer2.bias),
                 std::span<double>(p.params.layer3.bias)}) {
    for (auto& b : t) b = 0.1 * rng.normal();
  }
  return p;
}

double min_abs(const Matrix& m) {
  double lo = INFINITY;
  for (double v : m.data) lo = std::min(lo, std::abs(v));
  return lo;
}

}  // namespace

LossGradCheckReport check_loss_gradient(std::uint64_t seed, const LossGradCheckOptions& o) {
  if (o.batch < 2) throw std::invalid_argument("check_loss_gradient: batch must be >= 2");
  const LossConfig loss_cfg{o.beta, o.lambda};
  const std::size_t b = o.batch;
  Rng rng(seed);
  LossGradCheckReport report;

  for (;;) {
    Problem prob = draw_problem(rng, o);
    Mlp3Cache cache;
    const auto scores = mlp_forward(prob.params, prob.pairs, &cache);
    const std::span<const double> all(scores);
    const auto res = evaluate_loss(all.subspan(0, b), all.subspan(b, b), all.subspan(2 * b, b), loss_cfg);
    const bool near_relu = min_abs(cache.pre1) <= o.relu_margin || min_abs(cache.pre2) <= o.relu_margin;
    const bool near_hinge = std::abs(o.beta - (res.m - res.m_hat)) <= o.hinge_margin;
    if (near_relu || near_hinge) {
      ++report.resamples;
      if (report.resamples > 1000) throw std::runtime_error("check_loss_gradient: no kink-free point");
      continue;
    }

    const auto sg = loss_score_gradients(all.subspan(0, b), all.subspan(b, b), all.subspan(2 * b, b), loss_cfg);
    std::vector<double> upstream;
    upstream.insert(upstream.end(), sg.pos.begin(), sg.pos.end());
    upstream.insert(upstream.end(), sg.masked_pos.begin(), sg.masked_pos.end());
    upstream.insert(upstream.end(), sg.neg.begin(), sg.neg.end());
    const auto analytic = flatten(mlp_backward(prob.params, cache, upstream).params);

    Mlp3Params probe = prob.params;
    auto loss = [&](std::span<const double> flat) {
      unflatten(flat, probe);
      const auto s = mlp_forward(probe, prob.pairs);
      const std::span<const double> v(s);
      return evaluate_loss(v.subspan(0, b), v.subspan(b, b), v.subspan(2 * b, b), loss_cfg).loss;
    };
    const auto point = flatten(prob.params);
    const auto r = grad_check(loss, point, analytic, o.h, INFINITY);
    report.max_relative_error = r.max_relative_error;
    report.parameters = point.size();
    report.hinge_active = res.hinge_active;
    return report;
  }
}

}  // namespace smie
