// SPDX-License-Identifier: Apache-2.0
#include "smie/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "smie/errors.hpp"
#include "smie/kernels.hpp"

namespace smie {

LinearParams init_linear(std::size_t in, std::size_t out, Rng& rng) {
  if (in == 0 || out == 0) throw std::invalid_argument("init_linear: zero dimension");
  LinearParams p{Matrix(out, in), std::vector<double>(out, 0.0)};
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  for (auto& w : p.weight.data) w = rng.uniform(-bound, bound);
  return p;
}

void add_linear(Checkpoint& ck, const std::string& name, const LinearParams& p) {
  ck.add(name + ".weight",
         {static_cast<std::uint32_t>(p.weight.rows), static_cast<std::uint32_t>(p.weight.cols)},
         p.weight.data);
  ck.add(name + ".bias", {static_cast<std::uint32_t>(p.bias.size())}, p.bias);
}

LinearParams read_linear(const Checkpoint& ck, const std::string& name) {
  const auto& w = ck.get(name + ".weight");
  const auto& b = ck.get(name + ".bias");
  if (w.dims.size() != 2 || b.dims.size() != 1 || b.dims[0] != w.dims[0]) {
    throw DataError("checkpoint: inconsistent shapes for '" + name + "'");
  }
  LinearParams p{Matrix(w.dims[0], w.dims[1]), b.values};
  p.weight.data = w.values;
  return p;
}

Mlp3Params init_mlp3(const Mlp3Dims& dims, std::uint64_t seed) {
  Rng rng(seed);
  Mlp3Params p;
  p.layer1 = init_linear(dims.input, dims.hidden1, rng);
  p.layer2 = init_linear(dims.hidden1, dims.hidden2, rng);
  p.layer3 = init_linear(dims.hidden2, 1, rng);
  return p;
}

std::vector<double> mlp_forward(const Mlp3Params& params, const Matrix& batch,
                                Mlp3Cache* cache) {
  if (batch.cols != params.layer1.in()) {
    throw std::invalid_argument("mlp_forward: batch width " + std::to_string(batch.cols) +
                                " != input width " + std::to_string(params.layer1.in()));
  }
  Mlp3Cache local;
  Mlp3Cache& c = cache ? *cache : local;
  kernels::linear_forward(batch, params.layer1.weight, params.layer1.bias, c.pre1);
  kernels::relu(c.pre1, c.act1);
  kernels::linear_forward(c.act1, params.layer2.weight, params.layer2.bias, c.pre2);
  kernels::relu(c.pre2, c.act2);
  Matrix out;
  kernels::linear_forward(c.act2, params.layer3.weight, params.layer3.bias, out);
  if (cache) c.input = batch;
  return std::move(out.data);
}

Mlp3Grads mlp_backward(const Mlp3Params& params, const Mlp3Cache& cache,
                       std::span<const double> upstream) {
  const std::size_t n = cache.input.rows;
  if (upstream.size() != n || cache.input.cols != params.layer1.in() ||
      cache.pre1.rows != n || cache.pre1.cols != params.layer1.out() ||
      cache.pre2.rows != n || cache.pre2.cols != params.layer2.out() ||
      cache.act2.rows != n) {
    throw std::invalid_argument("mlp_backward: cache does not match params or upstream");
  }
  Mlp3Grads g;
  g.params = params;  // shapes
  Matrix up3(n, 1);
  std::copy(upstream.begin(), upstream.end(), up3.data.begin());

  kernels::linear_backward_params(cache.act2, up3, g.params.layer3.weight, g.params.layer3.bias);
  Matrix d2;
  kernels::linear_backward_input(up3, params.layer3.weight, d2);
  kernels::relu_backward(cache.pre2, d2);

  kernels::linear_backward_params(cache.act1, d2, g.params.layer2.weight, g.params.layer2.bias);
  Matrix d1;
  kernels::linear_backward_input(d2, params.layer2.weight, d1);
  kernels::relu_backward(cache.pre1, d1);

  kernels::linear_backward_params(cache.input, d1, g.params.layer1.weight, g.params.layer1.bias);
  kernels::linear_backward_input(d1, params.layer1.weight, g.input);
  return g;
}

std::vector<std::span<double>> tensors(Mlp3Params& p) {
  return {p.layer1.weight.data, p.layer1.bias, p.layer2.weight.data,
          p.layer2.bias,        p.layer3.weight.data, p.layer3.bias};
}

std::vector<std::span<const double>> tensors(const Mlp3Params& p) {
  return {p.layer1.weight.data, p.layer1.bias, p.layer2.weight.data,
          p.layer2.bias,        p.layer3.weight.data, p.layer3.bias};
}

std::vector<std::string> tensor_names(const std::string& prefix) {
  std::vector<std::string> names;
  for (const char* layer : {"layer1", "layer2", "layer3"}) {
    names.push_back(prefix + layer + ".weight");
    names.push_back(prefix + layer + ".bias");
  }
  return names;
}

std::vector<double> flatten(const Mlp3Params& p) {
  std::vector<double> flat;
  flat.reserve(p.parameter_count());
  for (auto t : tensors(p)) flat.insert(flat.end(), t.begin(), t.end());
  return flat;
}

void unflatten(std::span<const double> flat, Mlp3Params& p) {
  if (flat.size() != p.parameter_count()) {
    throw std::invalid_argument("unflatten: size mismatch");
  }
  std::size_t off = 0;
  for (auto t : tensors(p)) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), t.size(), t.begin());
    off += t.size();
  }
}

// ---- optimization ----------------------------------------------------------

AdamState AdamState::zeros_like(std::span<const std::span<const double>> params,
                                AdamConfig config) {
  AdamState s;
  s.config = config;
  for (auto p : params) {
    s.first_moment.emplace_back(p.size(), 0.0);
    s.second_moment.emplace_back(p.size(), 0.0);
  }
  return s;
}

void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw std::invalid_argument("adam_step: tensor count mismatch");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size() || params[t].size() != state.first_moment[t].size()) {
      throw std::invalid_argument("adam_step: tensor " + std::to_string(t) + " shape mismatch");
    }
    for (std::size_t i = 0; i < grads[t].size(); ++i) {
      if (!std::isfinite(grads[t][i])) {
        throw NumericError("adam_step: non-finite gradient in tensor " + std::to_string(t) +
                           " at index " + std::to_string(i));
      }
    }
  }

  const auto& cfg = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k];
    auto g = grads[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

double CosineSchedule::lr(std::size_t epoch) const {
  if (epoch > total_epochs) {
    throw std::out_of_range("cosine_lr: epoch " + std::to_string(epoch) + " beyond " +
                            std::to_string(total_epochs));
  }
  const double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * frac));
}

// ---- verification ----------------------------------------------------------

GradCheckResult grad_check(const std::function<double(std::span<const double>)>& loss,
                           std::span<const double> point, std::span<const double> analytic,
                           double h, double tolerance) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step h must be positive");
  if (point.size() != analytic.size()) {
    throw std::invalid_argument("grad_check: gradient size mismatch");
  }
  std::vector<double> probe(point.begin(), point.end());
  GradCheckResult r;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = loss(probe);
    probe[i] = orig - h;
    const double down = loss(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) /
                       std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    if (err > r.max_relative_error) {
      r.max_relative_error = err;
      r.worst_index = i;
    }
  }
  r.passed = r.max_relative_error <= tolerance;
  return r;
}

}  // namespace smie
