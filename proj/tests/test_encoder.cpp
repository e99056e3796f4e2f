// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "smie/encoder.hpp"
#include "smie/errors.hpp"

using namespace smie;

namespace {

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double popvar(std::span<const double> v) {
  const double mu = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size());
}

std::vector<LabeledSequence> synthetic_samples(const test::TempDir& dir, double noise,
                                               std::vector<int>& seen) {
  SynthConfig cfg;
  cfg.samples_per_class_train = 20;
  cfg.samples_per_class_test = 2;
  cfg.noise_sigma = noise;
  cfg.seed = 3;
  const auto res = generate_synthetic(cfg, dir.path());
  seen = res.split.seen;
  auto samples = load_samples(res.manifest, seen, Subset::kTrain);
  for (auto& s : samples) s.sequence = preprocess(s.sequence, 50);
  return samples;
}

}  // namespace

TEST_CASE("layer_norm") {
  const auto y = layer_norm(std::vector<double>{1.0, 2.0, 3.0});
  CHECK(std::abs(y[0] + 1.224745) < 1e-5);
  CHECK(std::abs(y[1]) < 1e-15);
  CHECK(std::abs(y[2] - 1.224745) < 1e-5);
  // exact value with eps: 1 / sqrt(2/3 + 1e-5)
  CHECK(y[2] == doctest::Approx(1.0 / std::sqrt(2.0 / 3.0 + 1e-5)).epsilon(1e-14));

  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(2 + rng.below(64));
    const double scale = std::exp(rng.uniform(-2.0, 4.0));
    for (auto& v : x) v = scale * rng.normal() + rng.uniform(-10.0, 10.0);
    const auto out = layer_norm(x);
    const double var = popvar(x);
    CHECK(std::abs(mean(out)) < 1e-9);
    // the eps term shrinks the output variance to var / (var + eps)
    CHECK(popvar(out) == doctest::Approx(var / (var + 1e-5)).epsilon(1e-9));
    if (var > 1.0) CHECK(std::abs(popvar(out) - 1.0) < 1e-5);
  }
  // constant vector maps to zeros instead of dividing by zero
  CHECK(layer_norm(std::vector<double>{4.0, 4.0}) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("layer_norm_backward matches central differences") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(3 + rng.below(10)), up(x.size());
    for (auto& v : x) v = rng.normal();
    for (auto& v : up) v = rng.normal();
    const auto analytic = layer_norm_backward(x, up);
    const auto r = grad_check(
        [&](std::span<const double> p) {
          const auto y = layer_norm(p);
          return std::inner_product(y.begin(), y.end(), up.begin(), 0.0);
        },
        x, analytic, 1e-6, 1e-6);
    CHECK(r.max_relative_error < 1e-6);
  }
}

TEST_CASE("encode_sequence shapes and pooling") {
  const auto enc = init_encoder(6, 5, 4, 0);
  SkeletonSequence seq(3, 2, 3);
  Rng rng(3);
  for (auto& v : seq.values) v = rng.normal();
  const Matrix f = encode_frames(enc, seq);
  CHECK(f.rows == 3);
  CHECK(f.cols == 4);
  const auto pooled = encode_sequence(enc, seq);
  CHECK(pooled == pool_and_norm(f));
  CHECK(pooled.size() == 4);
  // permuting frames does not change a mean-pooled feature
  SkeletonSequence rev = seq;
  for (std::size_t k = 0; k < 3; ++k) {
    std::copy(seq.frame(2 - k).begin(), seq.frame(2 - k).end(), rev.frame(k).begin());
  }
  const auto pooled_rev = encode_sequence(enc, rev);
  for (std::size_t i = 0; i < 4; ++i) CHECK(pooled_rev[i] == doctest::Approx(pooled[i]).epsilon(1e-12));

  SkeletonSequence wrong(3, 1, 3);
  CHECK_THROWS_AS(encode_frames(enc, wrong), std::invalid_argument);
}

TEST_CASE("pretrain_encoder") {
  test::TempDir dir("pretrain");
  std::vector<int> seen;

  SUBCASE("fits noiseless seen classes and is deterministic") {
    const auto samples = synthetic_samples(dir, 0.0, seen);
    PretrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 32;
    cfg.hidden = 32;
    cfg.feature_dim = 16;
    cfg.seed = 5;
    const auto a = pretrain_encoder(samples, seen, cfg);
    CHECK(a.params.frozen);
    CHECK(a.train_accuracy >= 0.95);
    CHECK(a.epoch_loss.size() == 30);
    CHECK(a.epoch_loss.back() < a.epoch_loss.front());
    const auto b = pretrain_encoder(samples, seen, cfg);
    CHECK(a.params == b.params);
    CHECK(a.epoch_loss == b.epoch_loss);

    Checkpoint ck = encoder_to_checkpoint(a.params);
    ck.save(dir / "enc.smck");
    CHECK(encoder_from_checkpoint(Checkpoint::load(dir / "enc.smck")) == a.params);
  }
  SUBCASE("rejects samples from classes outside the seen set") {
    auto samples = synthetic_samples(dir, 0.1, seen);
    std::vector<int> fewer(seen.begin(), seen.end() - 1);
    CHECK_THROWS(pretrain_encoder(samples, fewer, PretrainConfig{}));
  }
}
