// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "helpers.hpp"
#include "smie/errors.hpp"
#include "smie/nn.hpp"

using namespace smie;

namespace {

Matrix random_batch(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.normal();
  return m;
}

// Random nonzero biases so every layer's gradient path is exercised.
Mlp3Params random_mlp(const Mlp3Dims& dims, std::uint64_t seed) {
  auto p = init_mlp3(dims, seed);
  Rng rng(seed + 1);
  for (auto* layer : {&p.layer1, &p.layer2, &p.layer3}) {
    for (auto& b : layer->bias) b = 0.1 * rng.normal();
  }
  return p;
}

}  // namespace

TEST_CASE("parameter count of the connection network") {
  const auto p = init_mlp3({8, 4, 4}, 0);
  CHECK(p.parameter_count() == 61);
  CHECK(flatten(p).size() == 61);
  CHECK(tensor_names("net.").size() == 6);
  CHECK(tensor_names("net.")[0] == "net.layer1.weight");
}

TEST_CASE("init_linear respects its bound and zero bias") {
  Rng rng(1);
  const auto l = init_linear(24, 16, rng);
  const double bound = std::sqrt(6.0 / 24.0);
  for (double w : l.weight.data) CHECK(std::abs(w) <= bound);
  for (double b : l.bias) CHECK(b == 0.0);
  CHECK(init_mlp3({8, 4, 4}, 5) == init_mlp3({8, 4, 4}, 5));
  CHECK(init_mlp3({8, 4, 4}, 5) != init_mlp3({8, 4, 4}, 6));
}

TEST_CASE("flatten and unflatten are inverses") {
  const auto p = random_mlp({6, 5, 3}, 2);
  auto q = init_mlp3({6, 5, 3}, 99);
  unflatten(flatten(p), q);
  CHECK(q == p);
  std::vector<double> wrong(3);
  CHECK_THROWS_AS(unflatten(wrong, q), std::invalid_argument);
}

TEST_CASE("mlp_backward matches central differences") {
  const Mlp3Dims dims{6, 5, 4};
  const auto params = random_mlp(dims, 3);
  Rng rng(4);
  const Matrix batch = random_batch(7, 6, rng);
  std::vector<double> weights(7);
  for (auto& w : weights) w = rng.normal();

  auto loss_at = [&](const Mlp3Params& p, const Matrix& x) {
    const auto s = mlp_forward(p, x);
    double l = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) l += weights[i] * s[i];
    return l;
  };

  Mlp3Cache cache;
  mlp_forward(params, batch, &cache);
  const auto grads = mlp_backward(params, cache, weights);

  const auto point = flatten(params);
  const auto result = grad_check(
      [&](std::span<const double> flat) {
        auto p = params;
        unflatten(flat, p);
        return loss_at(p, batch);
      },
      point, flatten(grads.params), 1e-6, 1e-6);
  CHECK(result.max_relative_error < 1e-6);
  CHECK(result.passed);

  const auto input_check = grad_check(
      [&](std::span<const double> flat) {
        Matrix x = batch;
        std::copy(flat.begin(), flat.end(), x.data.begin());
        return loss_at(params, x);
      },
      batch.data, grads.input.data, 1e-6, 1e-6);
  CHECK(input_check.max_relative_error < 1e-6);

  CHECK_THROWS_AS(mlp_backward(params, cache, std::vector<double>(3)), std::invalid_argument);
}

TEST_CASE("forward without cache equals forward with cache") {
  const auto params = random_mlp({4, 3, 2}, 8);
  Rng rng(8);
  const auto batch = random_batch(5, 4, rng);
  Mlp3Cache cache;
  CHECK(mlp_forward(params, batch) == mlp_forward(params, batch, &cache));
  CHECK(cache.act2.rows == 5);
  CHECK(cache.act2.cols == 2);
}

TEST_CASE("adam_step") {
  std::vector<double> a{1.0, -2.0}, b{0.5};
  const std::vector<double> ga{0.3, -4.0}, gb{1e-3};
  std::vector<std::span<double>> params{a, b};
  std::vector<std::span<const double>> grads{ga, gb};
  std::vector<std::span<const double>> view{a, b};

  SUBCASE("first step moves each coordinate by about lr against the gradient sign") {
    auto state = AdamState::zeros_like(view);
    adam_step(params, grads, state, 0.01);
    CHECK(state.step == 1);
    CHECK(a[0] == doctest::Approx(0.99).epsilon(1e-6));
    CHECK(a[1] == doctest::Approx(-1.99).epsilon(1e-6));
    CHECK(b[0] == doctest::Approx(0.49).epsilon(1e-4));
  }
  SUBCASE("zero gradients leave parameters unchanged") {
    auto state = AdamState::zeros_like(view);
    const std::vector<double> za(2, 0.0), zb(1, 0.0);
    std::vector<std::span<const double>> zeros{za, zb};
    for (int i = 0; i < 3; ++i) adam_step(params, zeros, state, 0.1);
    CHECK(a == std::vector<double>{1.0, -2.0});
    CHECK(b == std::vector<double>{0.5});
  }
  SUBCASE("non-finite gradient throws and leaves state untouched") {
    auto state = AdamState::zeros_like(view);
    const std::vector<double> bad{NAN};
    std::vector<std::span<const double>> nan_grads{ga, bad};
    CHECK_THROWS_AS(adam_step(params, nan_grads, state, 0.1), NumericError);
    CHECK(state.step == 0);
    CHECK(a == std::vector<double>{1.0, -2.0});
    CHECK(state == AdamState::zeros_like(view));
  }
  SUBCASE("minimizes a quadratic") {
    auto state = AdamState::zeros_like(view);
    for (int i = 0; i < 2000; ++i) {
      const std::vector<double> qa{2.0 * (a[0] - 3.0), 2.0 * (a[1] + 1.0)}, qb{2.0 * b[0]};
      std::vector<std::span<const double>> g{qa, qb};
      adam_step(params, g, state, 0.05);
    }
    CHECK(a[0] == doctest::Approx(3.0).epsilon(1e-3));
    CHECK(a[1] == doctest::Approx(-1.0).epsilon(1e-3));
    CHECK(std::abs(b[0]) < 1e-2);
  }
}

TEST_CASE("cosine schedule") {
  const CosineSchedule s{1e-4, 100};
  CHECK(s.lr(0) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(s.lr(50) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(s.lr(100) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(s.lr(25) == doctest::Approx(0.5e-4 * (1.0 + std::cos(std::numbers::pi / 4.0))));
  for (std::size_t e = 1; e <= 100; ++e) CHECK(s.lr(e) <= s.lr(e - 1));
  CHECK_THROWS_AS(s.lr(101), std::out_of_range);
}

TEST_CASE("grad_check itself") {
  const std::vector<double> x{1.0, -2.0, 0.5};
  auto f = [](std::span<const double> v) {
    return v[0] * v[0] + 3.0 * v[1] * v[1] - v[0] * v[2];
  };
  const std::vector<double> exact{2.0 * 1.0 - 0.5, 6.0 * -2.0, -1.0};
  const auto good = grad_check(f, x, exact, 1e-4, 1e-8);
  CHECK(good.max_relative_error < 1e-10);
  CHECK(good.passed);

  const std::vector<double> wrong{1.5, -12.0, -1.1};
  const auto bad = grad_check(f, x, wrong, 1e-4, 1e-8);
  CHECK_FALSE(bad.passed);
  CHECK(bad.worst_index == 2);

  CHECK_THROWS_AS(grad_check(f, x, exact, 0.0, 1e-8), std::invalid_argument);
}

TEST_CASE("checkpoint round trip of linear layers") {
  test::TempDir dir("nn_ck");
  Rng rng(2);
  const auto l = init_linear(3, 2, rng);
  Checkpoint ck;
  add_linear(ck, "fc", l);
  ck.add_scalar("alpha", 0.25);
  ck.add_u64("seed", 0xFFFFFFFF12345678ULL);
  ck.save(dir / "a.smck");
  const auto back = Checkpoint::load(dir / "a.smck");
  CHECK(read_linear(back, "fc") == l);
  CHECK(back.scalar("alpha") == 0.25);
  CHECK(back.u64("seed") == 0xFFFFFFFF12345678ULL);
  CHECK_THROWS_AS(read_linear(back, "missing"), DataError);

  auto bytes = test::slurp(dir / "a.smck");
  test::spit(dir / "b.smck", bytes + "x");
  CHECK_THROWS_AS(Checkpoint::load(dir / "b.smck"), DataError);
  test::spit(dir / "c.smck", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(Checkpoint::load(dir / "c.smck"), DataError);
}
