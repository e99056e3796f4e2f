// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "helpers.hpp"
#include "smie/encoder.hpp"
#include "smie/eval.hpp"
#include "smie/kernels.hpp"
#include "smie/mi.hpp"
#include "smie/rng.hpp"
#include "smie/temporal.hpp"
#include "smie/train.hpp"
#include "smie/verify.hpp"

using namespace smie;
using Clock = std::chrono::steady_clock;

namespace {

// Mean unseen top-1 over seeds 0-2 must reach this. Frozen from the reference
// run of the default configuration (0.727, 1.000, 0.667; mean 0.798).
constexpr double kAccuracyThreshold = 0.70;
constexpr double kChance = 1.0 / 3.0;
constexpr double kAblationSlack = 0.02;
constexpr int kSeeds = 3;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

int failures = 0;

void report(int id, const char* title, const Outcome& o) {
  std::printf("[%s] criterion %d: %s: %s\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

// ---- 1: formula suite -------------------------------------------------------

Outcome formula_suite() {
  const auto t0 = Clock::now();
  Outcome o;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) {
      o.pass = false;
      o.detail += std::string(what) + " wrong; ";
    }
  };
  expect(std::abs(softplus(0.0) - std::numbers::ln2) < 1e-12, "softplus(0)");
  const std::vector<double> zeros(4, 0.0);
  expect(std::abs(jsd_mi(zeros, zeros) + 2.0 * std::numbers::ln2) < 1e-12, "jsd_mi(0)");
  expect(std::abs(hinge_loss(-0.4, -0.3, 0.5) - 0.6) < 1e-12, "hinge example");
  SkeletonSequence x(3, 1, 1);
  x.values = {0, 1, 3};
  const auto q = attention_weights(frame_motion(bidirectional_motion(x)));
  expect(std::abs(q[0] - 0.1) < 1e-12 && std::abs(q[1] - 0.5) < 1e-12 && std::abs(q[2] - 0.4) < 1e-12,
         "attention example");
  const auto ln = layer_norm(std::vector<double>{1, 2, 3});
  expect(std::abs(ln[0] + 1.224745) < 1e-5 && std::abs(ln[1]) < 1e-5 && std::abs(ln[2] - 1.224745) < 1e-5,
         "layer_norm example");
  const double t = seconds_since(t0);
  if (t >= 1.0) o.pass = false;
  o.detail += fmt("5 closed-form checks in %.4f s (limit 1 s)", t);
  return o;
}

// ---- 2: gradient verification -----------------------------------------------

Outcome gradient_check() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t params = 0, active = 0;
  // Pipeline input widths with narrower hidden layers keep the check within its time budget.
  LossGradCheckOptions opts;
  opts.visual_dim = 64;
  opts.semantic_dim = 32;
  opts.hidden1 = 32;
  opts.hidden2 = 16;
  opts.batch = 16;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = check_loss_gradient(seed, opts);
    worst = std::max(worst, r.max_relative_error);
    params = r.parameters;
    active += r.hinge_active ? 1 : 0;
  }
  const double t = seconds_since(t0);
  Outcome o;
  o.pass = worst < 1e-4 && t < 10.0;
  o.detail = fmt("max relative error %.3e over 10 batches (limit 1e-4), %.0f parameters each, ", worst,
                 static_cast<double>(params)) +
             fmt("hinge active in %.0f/10, %.2f s (limit 10 s)", static_cast<double>(active), t);
  return o;
}

// ---- 3: estimator bound properties ------------------------------------------

Outcome bound_properties() {
  Rng rng(2024);
  std::size_t violations = 0;
  double worst_cancel = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(128);
    const double scale = std::exp(rng.uniform(-4.0, 4.0));
    std::vector<double> g(n), gh(n), gn(n), gn2(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = scale * rng.normal();
      gh[i] = scale * rng.normal();
      gn[i] = scale * rng.normal();
      gn2[i] = scale * rng.normal();
    }
    const double m = jsd_mi(g, gn), mh = temporal_mi(gh, gn);
    if (!(m < 0.0) || !(mh < 0.0)) ++violations;
    worst_cancel = std::max(worst_cancel, std::abs((m - mh) - (jsd_mi(g, gn2) - temporal_mi(gh, gn2))));
    const std::size_t b = 2 + rng.below(32);
    Matrix s(b, b);
    for (auto& v : s.data) v = scale * rng.normal();
    if (!(infonce_diagnostic(s).bound <= std::log(static_cast<double>(b)))) ++violations;
  }
  Outcome o;
  o.pass = violations == 0 && worst_cancel < 1e-12;
  o.detail = fmt("1000 random score sets, %.0f sign/bound violations, max |delta(m - m_hat)| under "
                 "new negatives %.2e (limit 1e-12)",
                 static_cast<double>(violations), worst_cancel);
  return o;
}

// ---- CLI driving --------------------------------------------------------------

int cli(const std::string& args) {
  const std::string cmd = std::string(SMIE_CLI_PATH) + " --threads 1 " + args + " >/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct RunDirs {
  std::filesystem::path root;
  std::string data() const { return (root / "data").string(); }
  std::string split() const { return (root / "data/split.json").string(); }
  std::string encoder() const { return (root / "enc/encoder.smck").string(); }
};

/// synth -> pretrain -> train -> eval with defaults; returns top-1 or -1.
double full_pipeline(const RunDirs& d, int seed) {
  const std::string s = " --seed " + std::to_string(seed);
  if (cli("synth --out " + d.data() + s) != 0) return -1.0;
  if (cli("pretrain --data " + d.data() + " --split " + d.split() + " --out " + (d.root / "enc").string() + s) != 0)
    return -1.0;
  if (cli("train --data " + d.data() + " --split " + d.split() + " --encoder " + d.encoder() + " --out " +
          (d.root / "model").string() + s) != 0)
    return -1.0;
  if (cli("eval --data " + d.data() + " --split " + d.split() + " --encoder " + d.encoder() + " --model " +
          (d.root / "model/model.smck").string() + " --report " + (d.root / "report").string()) != 0)
    return -1.0;
  return nlohmann::json::parse(test::slurp(d.root / "report/summary.json")).at("top1_accuracy").get<double>();
}

double ablation_run(const RunDirs& d, int seed) {
  const std::string s = " --seed " + std::to_string(seed);
  if (cli("train --data " + d.data() + " --split " + d.split() + " --encoder " + d.encoder() + " --out " +
          (d.root / "model_l0").string() + " --lambda 0" + s) != 0)
    return -1.0;
  if (cli("eval --data " + d.data() + " --split " + d.split() + " --encoder " + d.encoder() + " --model " +
          (d.root / "model_l0/model.smck").string() + " --report " + (d.root / "report_l0").string()) != 0)
    return -1.0;
  return nlohmann::json::parse(test::slurp(d.root / "report_l0/summary.json")).at("top1_accuracy").get<double>();
}

// ---- 7: evaluation identities -------------------------------------------------

Outcome evaluation_identities(const RunDirs& d) {
  Outcome o;
  const auto manifest = load_manifest(d.root / "data/manifest.json");
  const auto split = read_split(d.split());
  const auto encoder = encoder_from_checkpoint(Checkpoint::load(d.encoder()));
  const auto model = estimator_from_checkpoint(Checkpoint::load(d.root / "model/model.smck"));
  const auto r = evaluate(model, manifest, split, encoder, 50);

  std::size_t trace = 0, total = 0, bad_rows = 0;
  for (std::size_t i = 0; i < r.classes.size(); ++i) {
    std::size_t row = 0;
    for (auto v : r.confusion[i]) row += v;
    std::size_t expected = 0;
    for (const auto& s : manifest.samples) {
      if (s.class_id == r.classes[i] && s.subset != Subset::kTrain) ++expected;
    }
    if (row != expected) ++bad_rows;
    trace += r.confusion[i][i];
    total += row;
  }
  const double identity_err = std::abs(static_cast<double>(trace) / static_cast<double>(total) - r.top1_accuracy);

  // confusion.csv written by the CLI must carry the same row sums
  std::istringstream csv(test::slurp(d.root / "report/confusion.csv"));
  std::string line;
  std::getline(csv, line);
  std::size_t csv_rows = 0;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::size_t sum = 0;
    while (std::getline(ss, cell, ',')) sum += std::stoul(cell);
    if (sum != 50) ++bad_rows;
    ++csv_rows;
  }

  // oracle scorer: the visual feature is the class embedding itself
  const auto unseen = load_embeddings(manifest, split.unseen);
  std::vector<EvalSample> exact;
  for (const auto& e : unseen) exact.push_back({e.class_id, e.class_id, e.vector});
  const auto oracle = evaluate_features(exact, unseen, [](std::span<const double> v, std::span<const SemanticEmbedding> c) {
    std::vector<double> s;
    for (const auto& e : c) s.push_back(std::inner_product(v.begin(), v.end(), e.vector.begin(), 0.0));
    return s;
  });

  o.pass = bad_rows == 0 && csv_rows == r.classes.size() && identity_err < 1e-12 && oracle.top1_accuracy == 1.0;
  o.detail = fmt("row-sum mismatches %.0f, |trace/total - top1| %.1e, oracle accuracy %.3f",
                 static_cast<double>(bad_rows), identity_err, oracle.top1_accuracy);
  return o;
}

std::vector<std::string> artifact_names() {
  return {"model/metrics.csv",    "model/model.smck",     "enc/encoder.smck",  "report/confusion.csv",
          "report/per_class.csv", "report/scores.csv",    "report/summary.json"};
}

}  // namespace

int main() {
  kernels::set_num_threads(1);
  report(1, "formula unit suite", formula_suite());
  report(2, "full-loss gradient verification", gradient_check());
  report(3, "estimator bound properties", bound_properties());

  test::TempDir work("acceptance");
  std::vector<RunDirs> runs;
  std::vector<double> acc_full, acc_l0;
  double pipeline_seconds = 0.0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    runs.push_back({work / ("seed" + std::to_string(seed))});
    const auto t0 = Clock::now();
    acc_full.push_back(full_pipeline(runs.back(), seed));
    pipeline_seconds += seconds_since(t0);
    std::printf("  seed %d: full SMIE top-1 %.4f\n", seed, acc_full.back());
  }
  const double mean_full = std::accumulate(acc_full.begin(), acc_full.end(), 0.0) / kSeeds;
  {
    Outcome o;
    const bool ran = std::none_of(acc_full.begin(), acc_full.end(), [](double a) { return a < 0.0; });
    o.pass = ran && mean_full >= kAccuracyThreshold && mean_full >= kChance + 0.20 && mean_full >= 0.55 &&
             pipeline_seconds < 300.0;
    o.detail = fmt("mean unseen top-1 %.4f over 3 seeds (threshold %.2f, chance %.3f), ", mean_full,
                   kAccuracyThreshold, kChance) +
               fmt("%.0f s for the three pipelines (limit 300 s)", pipeline_seconds);
    report(4, "synthetic zero-shot transfer", o);
  }

  for (int seed = 0; seed < kSeeds; ++seed) {
    acc_l0.push_back(ablation_run(runs[seed], seed));
    std::printf("  seed %d: lambda=0 top-1 %.4f\n", seed, acc_l0.back());
  }
  const double mean_l0 = std::accumulate(acc_l0.begin(), acc_l0.end(), 0.0) / kSeeds;
  {
    Outcome o;
    const bool ran = std::none_of(acc_l0.begin(), acc_l0.end(), [](double a) { return a < 0.0; });
    o.pass = ran && mean_full >= mean_l0 - kAblationSlack;
    o.detail = fmt("full %.4f vs lambda=0 %.4f (allowed shortfall %.2f)", mean_full, mean_l0, kAblationSlack);
    report(5, "ablation non-inferiority", o);
  }

  {
    // rerun seed 0 under the same paths and compare every artifact
    std::vector<std::string> first;
    for (const auto& f : artifact_names()) first.push_back(test::slurp(runs[0].root / f));
    std::filesystem::remove_all(runs[0].root);
    const double again = full_pipeline(runs[0], 0);
    std::size_t differing = 0;
    const auto names = artifact_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (first[i].empty() || test::slurp(runs[0].root / names[i]) != first[i]) ++differing;
    }
    Outcome o;
    o.pass = again >= 0.0 && differing == 0;
    o.detail = fmt("%.0f of %.0f artifacts differ between two identical single-threaded runs",
                   static_cast<double>(differing), static_cast<double>(names.size()));
    report(6, "determinism", o);
  }

  report(7, "evaluation identities", evaluation_identities(runs[0]));

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
