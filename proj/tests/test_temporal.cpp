// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <bit>
#include <numeric>
#include <stdexcept>

#include "smie/rng.hpp"
#include "smie/temporal.hpp"

using namespace smie;

namespace {

SkeletonSequence line(std::vector<double> v) {
  SkeletonSequence s(v.size(), 1, 1);
  s.values = std::move(v);
  return s;
}

SkeletonSequence random_sequence(std::size_t k, Rng& rng) {
  SkeletonSequence s(k, 3, 2);
  for (auto& v : s.values) v = rng.normal();
  return s;
}

}  // namespace

TEST_CASE("hand example x = [0, 1, 3]") {
  const auto x = line({0, 1, 3});
  const auto p = bidirectional_motion(x);
  CHECK(p.values == std::vector<double>{1, 5, 4});
  const auto pk = frame_motion(p);
  CHECK(pk == std::vector<double>{1, 5, 4});
  const auto q = attention_weights(pk);
  CHECK(std::abs(q[0] - 0.1) < 1e-12);
  CHECK(std::abs(q[1] - 0.5) < 1e-12);
  CHECK(std::abs(q[2] - 0.4) < 1e-12);
  const auto key = select_keyframes(q, 1);
  CHECK(key == std::vector<std::size_t>{1});
  CHECK(mask_keyframes(x, key).values == std::vector<double>{0, 0, 3});
  CHECK(attention_masked(x, 1).values == std::vector<double>{0, 0, 3});
}

TEST_CASE("bidirectional_motion edge cases") {
  CHECK(bidirectional_motion(line({2, 2, 2})).values == std::vector<double>{0, 0, 0});
  CHECK(bidirectional_motion(line({7})).values == std::vector<double>{0});
}

TEST_CASE("frame_motion averages over joints and channels") {
  SkeletonSequence p(2, 2, 1);
  p.values = {1, 3, 0, 0};
  CHECK(frame_motion(p) == std::vector<double>{2, 0});
  for (auto& v : p.values) v *= 2.0;
  CHECK(frame_motion(p) == std::vector<double>{4, 0});
}

TEST_CASE("attention_weights") {
  CHECK(attention_weights(std::vector<double>{0, 0, 0, 0}) ==
        std::vector<double>{0.25, 0.25, 0.25, 0.25});
  CHECK_THROWS_AS(attention_weights(std::vector<double>{1, -1}), std::invalid_argument);
}

TEST_CASE("select_keyframes") {
  const std::vector<double> uniform(4, 0.25);
  CHECK(select_keyframes(uniform, 2) == std::vector<std::size_t>{0, 1});
  CHECK(select_keyframes(uniform, 0).empty());
  const std::vector<double> q{0.3, 0.1, 0.3, 0.05, 0.25};
  CHECK(select_keyframes(q, 3) == std::vector<std::size_t>{0, 2, 4});
  CHECK(select_keyframes(q, 5) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS(select_keyframes(q, 6), std::invalid_argument);
}

TEST_CASE("mask_keyframes") {
  Rng rng(1);
  const auto s = random_sequence(6, rng);
  CHECK(mask_keyframes(s, {}) == s);
  const std::vector<std::size_t> all{0, 1, 2, 3, 4, 5};
  for (double v : mask_keyframes(s, all).values) CHECK(v == 0.0);
  const std::vector<std::size_t> bad{6};
  CHECK_THROWS_AS(mask_keyframes(s, bad), std::out_of_range);
}

TEST_CASE("default keyframe count") {
  CHECK(default_keyframe_count(50) == 15);
  CHECK(default_keyframe_count(10) == 3);
  CHECK(default_keyframe_count(20) == 6);
}

TEST_CASE("random sequence properties") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng.below(60);
    const auto s = random_sequence(k, rng);
    const auto q = attention_weights(frame_motion(bidirectional_motion(s)));
    CHECK(std::abs(std::accumulate(q.begin(), q.end(), 0.0) - 1.0) < 1e-9);
    for (double v : q) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }

    // translation invariance: use a power-of-two shift so differences stay exact
    auto shifted = s;
    for (auto& v : shifted.values) v += 4.0;
    const auto p1 = bidirectional_motion(s), p2 = bidirectional_motion(shifted);
    for (std::size_t i = 0; i < p1.values.size(); ++i) {
      CHECK(p2.values[i] == doctest::Approx(p1.values[i]).epsilon(1e-12).scale(1.0));
    }
    const auto q2 = attention_weights(frame_motion(p2));
    for (std::size_t i = 0; i < k; ++i) CHECK(std::abs(q2[i] - q[i]) < 1e-12);

    // unselected frames are untouched bit for bit
    const std::size_t count = rng.below(k + 1);
    const auto key = select_keyframes(q, count);
    CHECK(key.size() == count);
    CHECK(std::is_sorted(key.begin(), key.end()));
    CHECK(select_keyframes(q, count) == key);
    const auto masked = mask_keyframes(s, key);
    for (std::size_t f = 0; f < k; ++f) {
      const bool selected = std::find(key.begin(), key.end(), f) != key.end();
      for (std::size_t i = 0; i < s.frame_size(); ++i) {
        if (selected) {
          CHECK(masked.frame(f)[i] == 0.0);
        } else {
          CHECK(std::bit_cast<std::uint64_t>(masked.frame(f)[i]) ==
                std::bit_cast<std::uint64_t>(s.frame(f)[i]));
        }
      }
    }
    // the selection holds the largest weights
    if (count > 0 && count < k) {
      double min_in = 1.0, max_out = 0.0;
      for (std::size_t f = 0; f < k; ++f) {
        const bool selected = std::find(key.begin(), key.end(), f) != key.end();
        if (selected) min_in = std::min(min_in, q[f]);
        else max_out = std::max(max_out, q[f]);
      }
      CHECK(min_in >= max_out);
    }
  }
}
