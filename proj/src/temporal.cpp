// SPDX-License-Identifier: Apache-2.0
#include "smie/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace smie {

SkeletonSequence bidirectional_motion(const SkeletonSequence& seq) {
  if (seq.frames == 0) throw std::invalid_argument("bidirectional_motion: empty sequence");
  SkeletonSequence p(seq.frames, seq.joints, seq.channels);
  const std::size_t width = seq.frame_size();
  for (std::size_t k = 0; k < seq.frames; ++k) {
    const auto cur = seq.frame(k);
    auto out = p.frame(k);
    for (std::size_t i = 0; i < width; ++i) {
      const double next = k + 1 < seq.frames ? seq.frame(k + 1)[i] - cur[i] : 0.0;
      const double prev = k > 0 ? seq.frame(k - 1)[i] - cur[i] : 0.0;
      out[i] = next * next + prev * prev;
    }
  }
  return p;
}

std::vector<double> frame_motion(const SkeletonSequence& motion) {
  std::vector<double> pk(motion.frames, 0.0);
  const double width = static_cast<double>(motion.frame_size());
  for (std::size_t k = 0; k < motion.frames; ++k) {
    const auto f = motion.frame(k);
    pk[k] = std::accumulate(f.begin(), f.end(), 0.0) / width;
  }
  return pk;
}

std::vector<double> attention_weights(std::span<const double> frame_motion) {
  if (frame_motion.empty()) throw std::invalid_argument("attention_weights: no frames");
  double total = 0.0;
  for (double p : frame_motion) {
    if (p < 0.0 || !std::isfinite(p)) {
      throw std::invalid_argument("attention_weights: motion must be finite and non-negative");
    }
    total += p;
  }
  std::vector<double> q(frame_motion.size());
  if (total == 0.0) {
    std::fill(q.begin(), q.end(), 1.0 / static_cast<double>(q.size()));
    return q;
  }
  for (std::size_t k = 0; k < q.size(); ++k) q[k] = frame_motion[k] / total;
  return q;
}

std::vector<std::size_t> select_keyframes(std::span<const double> weights, std::size_t count) {
  if (count > weights.size()) {
    throw std::invalid_argument("select_keyframes: P=" + std::to_string(count) +
                                " exceeds frame count " + std::to_string(weights.size()));
  }
  std::vector<std::size_t> idx(weights.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

SkeletonSequence mask_keyframes(const SkeletonSequence& seq, std::span<const std::size_t> frames) {
  SkeletonSequence out = seq;
  for (std::size_t k : frames) {
    if (k >= seq.frames) {
      throw std::out_of_range("mask_keyframes: frame " + std::to_string(k) + " out of range");
    }
    auto f = out.frame(k);
    std::fill(f.begin(), f.end(), 0.0);
  }
  return out;
}

std::size_t default_keyframe_count(std::size_t frames) {
  if (frames == 50) return 15;
  return static_cast<std::size_t>(std::lround(0.3 * static_cast<double>(frames)));
}

SkeletonSequence attention_masked(const SkeletonSequence& seq, std::size_t count) {
  const auto q = attention_weights(frame_motion(bidirectional_motion(seq)));
  return mask_keyframes(seq, select_keyframes(q, count));
}

}  // namespace smie
