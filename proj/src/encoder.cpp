// SPDX-License-Identifier: Apache-2.0
#include "smie/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "smie/errors.hpp"
#include "smie/kernels.hpp"
#include "smie/rng.hpp"

namespace smie {

namespace {

constexpr double kLayerNormEps = 1e-5;

Matrix frames_matrix(const SkeletonSequence& seq) {
  Matrix m(seq.frames, seq.frame_size());
  std::copy(seq.values.begin(), seq.values.end(), m.data.begin());
  return m;
}

std::vector<double> temporal_mean(const Matrix& features, std::size_t first_row,
                                  std::size_t count) {
  std::vector<double> pooled(features.cols, 0.0);
  for (std::size_t r = first_row; r < first_row + count; ++r) {
    const auto row = features.row(r);
    for (std::size_t i = 0; i < pooled.size(); ++i) pooled[i] += row[i];
  }
  for (auto& v : pooled) v /= static_cast<double>(count);
  return pooled;
}

}  // namespace

FrameEncoderParams init_encoder(std::size_t input_dim, std::size_t hidden, std::size_t feature_dim,
                                std::uint64_t seed) {
  Rng rng(seed);
  FrameEncoderParams p;
  p.linear1 = init_linear(input_dim, hidden, rng);
  p.linear2 = init_linear(hidden, feature_dim, rng);
  return p;
}

Matrix encode_frames(const FrameEncoderParams& params, const SkeletonSequence& seq) {
  if (seq.frame_size() != params.input_dim()) {
    throw std::invalid_argument("encode_frames: frame width " + std::to_string(seq.frame_size()) +
                                " != encoder input " + std::to_string(params.input_dim()));
  }
  Matrix pre, act, out;
  kernels::linear_forward(frames_matrix(seq), params.linear1.weight, params.linear1.bias, pre);
  kernels::relu(pre, act);
  kernels::linear_forward(act, params.linear2.weight, params.linear2.bias, out);
  return out;
}

std::vector<double> layer_norm(std::span<const double> x, double eps) {
  if (x.empty()) throw std::invalid_argument("layer_norm: empty input");
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv_std = 1.0 / std::sqrt(var + eps);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) * inv_std;
  return y;
}

std::vector<double> layer_norm_backward(std::span<const double> x, std::span<const double> upstream,
                                        double eps) {
  if (x.size() != upstream.size() || x.empty()) {
    throw std::invalid_argument("layer_norm_backward: size mismatch");
  }
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv_std = 1.0 / std::sqrt(var + eps);
  double mean_up = 0.0, mean_up_y = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double y = (x[i] - mean) * inv_std;
    mean_up += upstream[i];
    mean_up_y += upstream[i] * y;
  }
  mean_up /= n;
  mean_up_y /= n;
  std::vector<double> dx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double y = (x[i] - mean) * inv_std;
    dx[i] = inv_std * (upstream[i] - mean_up - y * mean_up_y);
  }
  return dx;
}

std::vector<double> pool_and_norm(const Matrix& frame_features) {
  if (frame_features.rows == 0) throw std::invalid_argument("pool_and_norm: no frames");
  return layer_norm(temporal_mean(frame_features, 0, frame_features.rows), kLayerNormEps);
}

std::vector<double> encode_sequence(const FrameEncoderParams& params, const SkeletonSequence& seq) {
  return pool_and_norm(encode_frames(params, seq));
}

PretrainResult pretrain_encoder(std::span<const LabeledSequence> samples,
                                std::span<const int> seen_classes, const PretrainConfig& cfg) {
  if (seen_classes.empty()) throw ConfigError("pretrain_encoder: empty seen set");
  if (samples.empty()) throw ConfigError("pretrain_encoder: no seen-class training samples");
  if (cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0)) {
    throw ConfigError("pretrain_encoder: epochs, batch_size and lr must be positive");
  }
  std::map<int, std::size_t> label_of;
  for (int id : seen_classes) label_of.emplace(id, label_of.size());
  const std::size_t frames = samples.front().sequence.frames;
  const std::size_t width = samples.front().sequence.frame_size();
  for (const auto& s : samples) {
    if (!label_of.count(s.class_id)) {
      throw ConfigError("pretrain_encoder: sample " + std::to_string(s.sample_id) +
                        " is not from a seen class");
    }
    if (s.sequence.frames != frames || s.sequence.frame_size() != width) {
      throw std::invalid_argument("pretrain_encoder: sequences must share one shape");
    }
  }
  const std::size_t n_labels = label_of.size();

  Rng init_rng(mix_seed(cfg.seed, 0));
  FrameEncoderParams enc;
  enc.linear1 = init_linear(width, cfg.hidden, init_rng);
  enc.linear2 = init_linear(cfg.hidden, cfg.feature_dim, init_rng);
  LinearParams head = init_linear(cfg.feature_dim, n_labels, init_rng);

  auto param_views = [&] {
    return std::vector<std::span<double>>{enc.linear1.weight.data, enc.linear1.bias,
                                          enc.linear2.weight.data, enc.linear2.bias,
                                          head.weight.data,        head.bias};
  };
  std::vector<std::span<const double>> const_views;
  for (auto v : param_views()) const_views.emplace_back(v);
  AdamState adam = AdamState::zeros_like(const_views);

  // Forward over a batch of sample indices; returns logits and fills caches.
  struct BatchCache {
    Matrix input, pre1, act1, features, pooled, normed, logits;
  };
  auto forward = [&](std::span<const std::size_t> idx, BatchCache& c) {
    const std::size_t b = idx.size();
    c.input = Matrix(b * frames, width);
    for (std::size_t i = 0; i < b; ++i) {
      const auto& v = samples[idx[i]].sequence.values;
      std::copy(v.begin(), v.end(), c.input.data.begin() + static_cast<std::ptrdiff_t>(i * frames * width));
    }
    kernels::linear_forward(c.input, enc.linear1.weight, enc.linear1.bias, c.pre1);
    kernels::relu(c.pre1, c.act1);
    kernels::linear_forward(c.act1, enc.linear2.weight, enc.linear2.bias, c.features);
    c.pooled = Matrix(b, cfg.feature_dim);
    c.normed = Matrix(b, cfg.feature_dim);
    for (std::size_t i = 0; i < b; ++i) {
      const auto pooled = temporal_mean(c.features, i * frames, frames);
      const auto normed = layer_norm(pooled, kLayerNormEps);
      std::copy(pooled.begin(), pooled.end(), c.pooled.row(i).begin());
      std::copy(normed.begin(), normed.end(), c.normed.row(i).begin());
    }
    kernels::linear_forward(c.normed, head.weight, head.bias, c.logits);
  };

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  PretrainResult result;
  BatchCache c;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 100 + epoch));
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, b);
      forward(idx, c);

      // softmax cross-entropy, mean over the batch
      Matrix dlogits(b, n_labels);
      for (std::size_t i = 0; i < b; ++i) {
        const auto row = c.logits.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        const std::size_t label = label_of.at(samples[idx[i]].class_id);
        loss_sum += -(row[label] - mx - std::log(z));
        for (std::size_t k = 0; k < n_labels; ++k) {
          const double p = std::exp(row[k] - mx) / z;
          dlogits(i, k) = (p - (k == label ? 1.0 : 0.0)) / static_cast<double>(b);
        }
      }
      if (!std::isfinite(loss_sum)) throw NumericError("pretrain_encoder: non-finite loss");

      LinearParams g_head = head, g1 = enc.linear1, g2 = enc.linear2;
      kernels::linear_backward_params(c.normed, dlogits, g_head.weight, g_head.bias);
      Matrix dnormed;
      kernels::linear_backward_input(dlogits, head.weight, dnormed);
      Matrix dfeatures(b * frames, cfg.feature_dim);
      for (std::size_t i = 0; i < b; ++i) {
        const auto dpooled = layer_norm_backward(c.pooled.row(i), dnormed.row(i), kLayerNormEps);
        for (std::size_t k = 0; k < frames; ++k) {
          auto row = dfeatures.row(i * frames + k);
          for (std::size_t d = 0; d < row.size(); ++d) {
            row[d] = dpooled[d] / static_cast<double>(frames);
          }
        }
      }
      kernels::linear_backward_params(c.act1, dfeatures, g2.weight, g2.bias);
      Matrix dact1;
      kernels::linear_backward_input(dfeatures, enc.linear2.weight, dact1);
      kernels::relu_backward(c.pre1, dact1);
      kernels::linear_backward_params(c.input, dact1, g1.weight, g1.bias);

      const std::vector<std::span<const double>> grads{g1.weight.data, g1.bias, g2.weight.data,
                                                       g2.bias,        g_head.weight.data,
                                                       g_head.bias};
      adam_step(param_views(), grads, adam, cfg.lr);
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(samples.size()));
  }

  std::size_t correct = 0;
  for (std::size_t start = 0; start < samples.size(); start += cfg.batch_size) {
    const std::size_t b = std::min(cfg.batch_size, samples.size() - start);
    std::vector<std::size_t> idx(b);
    for (std::size_t i = 0; i < b; ++i) idx[i] = start + i;
    forward(idx, c);
    for (std::size_t i = 0; i < b; ++i) {
      const auto row = c.logits.row(i);
      const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (pred == label_of.at(samples[idx[i]].class_id)) ++correct;
    }
  }
  result.train_accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  enc.frozen = true;
  result.params = std::move(enc);
  return result;
}

Checkpoint encoder_to_checkpoint(const FrameEncoderParams& params) {
  Checkpoint ck;
  add_linear(ck, "linear1", params.linear1);
  add_linear(ck, "linear2", params.linear2);
  ck.add_scalar("frozen", params.frozen ? 1.0 : 0.0);
  return ck;
}

FrameEncoderParams encoder_from_checkpoint(const Checkpoint& ck) {
  FrameEncoderParams p;
  p.linear1 = read_linear(ck, "linear1");
  p.linear2 = read_linear(ck, "linear2");
  if (p.linear2.in() != p.linear1.out()) throw DataError("encoder checkpoint: layer dims differ");
  p.frozen = ck.scalar("frozen") != 0.0;
  return p;
}

}  // namespace smie
