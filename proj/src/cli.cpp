// SPDX-License-Identifier: Apache-2.0
#include "smie/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "smie/data.hpp"
#include "smie/encoder.hpp"
#include "smie/errors.hpp"
#include "smie/eval.hpp"
#include "smie/kernels.hpp"
#include "smie/temporal.hpp"
#include "smie/train.hpp"
#include "smie/verify.hpp"

namespace smie::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json read_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    auto j = json::parse(in);
    if (!j.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known,
                         const char* what) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError(std::string("unknown ") + what + " config key '" + key + "'");
    }
  }
}

template <typename T>
void from_file(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

template <typename T>
void override_with(const std::optional<T>& flag, T& out) {
  if (flag) out = *flag;
}

/// FNV-1a over the canonical dump of the resolved config.
std::string config_hash(const json& resolved) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : resolved.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

json provenance(const std::string& command, const json& resolved, std::uint64_t seed) {
  return json{{"command", command},
              {"version", kVersion},
              {"config_hash", config_hash(resolved)},
              {"seed", seed}};
}

void write_json_file(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string());
}

fs::path manifest_path(const std::string& data_dir) { return fs::path(data_dir) / "manifest.json"; }

// ---- synth -----------------------------------------------------------------

struct SynthFlags {
  std::string out, config;
  std::optional<std::size_t> classes, seen, train_per_class, test_per_class, frames, joints,
      channels, semantic_dim, latent_dim;
  std::optional<double> noise;
  std::optional<std::uint64_t> seed;
};

json synth_to_json(const SynthConfig& c) {
  return json{{"n_classes", c.n_classes},
              {"n_seen", c.n_seen},
              {"samples_per_class_train", c.samples_per_class_train},
              {"samples_per_class_test", c.samples_per_class_test},
              {"frames", c.frames},
              {"joints", c.joints},
              {"channels", c.channels},
              {"semantic_dim", c.semantic_dim},
              {"latent_dim", c.latent_dim},
              {"noise_sigma", c.noise_sigma},
              {"seed", c.seed}};
}

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  SynthConfig c;
  const json file = read_config_file(f.config);
  reject_unknown_keys(file,
                      {"n_classes", "n_seen", "samples_per_class_train", "samples_per_class_test",
                       "frames", "joints", "channels", "semantic_dim", "latent_dim", "noise_sigma",
                       "seed"},
                      "synth");
  from_file(file, "n_classes", c.n_classes);
  from_file(file, "n_seen", c.n_seen);
  from_file(file, "samples_per_class_train", c.samples_per_class_train);
  from_file(file, "samples_per_class_test", c.samples_per_class_test);
  from_file(file, "frames", c.frames);
  from_file(file, "joints", c.joints);
  from_file(file, "channels", c.channels);
  from_file(file, "semantic_dim", c.semantic_dim);
  from_file(file, "latent_dim", c.latent_dim);
  from_file(file, "noise_sigma", c.noise_sigma);
  from_file(file, "seed", c.seed);
  override_with(f.classes, c.n_classes);
  override_with(f.seen, c.n_seen);
  override_with(f.train_per_class, c.samples_per_class_train);
  override_with(f.test_per_class, c.samples_per_class_test);
  override_with(f.frames, c.frames);
  override_with(f.joints, c.joints);
  override_with(f.channels, c.channels);
  override_with(f.semantic_dim, c.semantic_dim);
  override_with(f.latent_dim, c.latent_dim);
  override_with(f.noise, c.noise_sigma);
  override_with(f.seed, c.seed);
  c.validate();

  const json resolved = synth_to_json(c);
  out << "resolved config: " << resolved.dump() << '\n';
  const auto result = generate_synthetic(c, f.out);
  write_json_file(json{{"config", resolved}, {"provenance", provenance("synth", resolved, c.seed)}},
                  fs::path(f.out) / "synth_config.json");
  out << "wrote " << result.manifest.classes.size() << " classes, "
      << result.manifest.samples.size() << " samples to " << f.out << '\n';
  return kSuccess;
}

// ---- splits ----------------------------------------------------------------

struct SplitsFlags {
  std::string data, out;
  std::size_t unseen = 5;
  std::size_t folds = 3;
  std::uint64_t seed = 0;
};

int cmd_splits(const SplitsFlags& f, std::ostream& out) {
  const auto manifest = load_manifest(manifest_path(f.data));
  const json resolved{{"data", f.data}, {"unseen", f.unseen}, {"folds", f.folds}, {"seed", f.seed}};
  out << "resolved config: " << resolved.dump() << '\n';
  const auto splits = make_splits(manifest, f.unseen, f.folds, f.seed);
  const fs::path dir = f.out.empty() ? fs::path(f.data) / "splits" : fs::path(f.out);
  ensure_dir(dir);
  for (std::size_t i = 0; i < splits.size(); ++i) {
    const auto path = dir / ("split_" + std::to_string(i) + ".json");
    write_split(splits[i], path);
    out << path.string() << '\n';
  }
  return kSuccess;
}

// ---- pretrain --------------------------------------------------------------

struct PretrainFlags {
  std::string data, split, out, config;
  std::optional<double> lr;
  std::optional<std::size_t> epochs, batch, hidden, dim, frames;
  std::optional<std::uint64_t> seed;
};

int cmd_pretrain(const PretrainFlags& f, std::ostream& out) {
  PretrainConfig c;
  std::size_t frames = 50;
  const json file = read_config_file(f.config);
  reject_unknown_keys(file, {"lr", "epochs", "batch_size", "hidden", "feature_dim", "frames", "seed"},
                      "pretrain");
  from_file(file, "lr", c.lr);
  from_file(file, "epochs", c.epochs);
  from_file(file, "batch_size", c.batch_size);
  from_file(file, "hidden", c.hidden);
  from_file(file, "feature_dim", c.feature_dim);
  from_file(file, "frames", frames);
  from_file(file, "seed", c.seed);
  override_with(f.lr, c.lr);
  override_with(f.epochs, c.epochs);
  override_with(f.batch, c.batch_size);
  override_with(f.hidden, c.hidden);
  override_with(f.dim, c.feature_dim);
  override_with(f.frames, frames);
  override_with(f.seed, c.seed);
  if (frames == 0 || c.hidden == 0 || c.feature_dim == 0) {
    throw ConfigError("pretrain: frames, hidden and feature_dim must be positive");
  }
  const json resolved{{"lr", c.lr},         {"epochs", c.epochs}, {"batch_size", c.batch_size},
                      {"hidden", c.hidden}, {"feature_dim", c.feature_dim},
                      {"frames", frames},   {"seed", c.seed}};
  out << "resolved config: " << resolved.dump() << '\n';

  const auto manifest = load_manifest(manifest_path(f.data));
  const auto split = read_split(f.split);
  split.validate(manifest.class_ids());
  auto samples = load_samples(manifest, split.seen, Subset::kTrain);
  for (auto& s : samples) s.sequence = preprocess(s.sequence, frames);
  const auto result = pretrain_encoder(samples, split.seen, c);

  ensure_dir(f.out);
  auto ck = encoder_to_checkpoint(result.params);
  ck.add_u64("config.frames", frames);
  ck.save(fs::path(f.out) / "encoder.smck");
  write_json_file(json{{"config", resolved},
                       {"train_accuracy", result.train_accuracy},
                       {"epoch_loss", result.epoch_loss},
                       {"provenance", provenance("pretrain", resolved, c.seed)}},
                  fs::path(f.out) / "pretrain_summary.json");
  char line[128];
  std::snprintf(line, sizeof line, "seen-class training accuracy %.6f\n", result.train_accuracy);
  out << line;
  return kSuccess;
}

// ---- train -----------------------------------------------------------------

struct TrainFlags {
  std::string data, split, encoder, out, config;
  std::optional<double> beta, lambda, lr;
  std::optional<long> keyframes;
  std::optional<std::size_t> epochs, batch, hidden1, hidden2, frames;
  std::optional<std::uint64_t> seed;
};

FrameEncoderParams load_frozen_encoder(const std::string& path) {
  auto enc = encoder_from_checkpoint(Checkpoint::load(path));
  if (!enc.frozen) throw ConfigError("encoder " + path + " is not frozen; run pretrain first");
  return enc;
}

int cmd_train(const TrainFlags& f, std::ostream& out) {
  TrainConfig c;
  update_from_json(c, read_config_file(f.config));
  override_with(f.lr, c.lr);
  override_with(f.epochs, c.epochs);
  override_with(f.batch, c.batch_size);
  override_with(f.beta, c.beta);
  override_with(f.lambda, c.lambda);
  override_with(f.keyframes, c.keyframes);
  override_with(f.frames, c.frames);
  override_with(f.seed, c.seed);
  override_with(f.hidden1, c.hidden1);
  override_with(f.hidden2, c.hidden2);
  c.validate();
  const json resolved = c;
  out << "resolved config: " << resolved.dump() << '\n';

  const auto manifest = load_manifest(manifest_path(f.data));
  const auto split = read_split(f.split);
  const auto encoder = load_frozen_encoder(f.encoder);
  const auto cache = precompute_features(manifest, split, encoder, c);
  auto state = init_train_state(cache, c);
  std::size_t collisions = 0;
  train(state, cache, c, [&](const EpochMetrics& m) {
    collisions += m.collisions;
    char line[256];
    std::snprintf(line, sizeof line,
                  "epoch %zu lr %.6e m %.6f m_hat %.6f L1 %.6f L2 %.6f L %.6f bound %.6f\n",
                  m.epoch, m.lr, m.m, m.m_hat, m.l1, m.l2, m.loss, m.infonce_bound);
    out << line;
  });

  ensure_dir(f.out);
  auto ck = train_state_to_checkpoint(state);
  ck.add_u64("config.frames", c.frames);
  ck.save(fs::path(f.out) / "model.smck");
  write_metrics_csv(state.history, fs::path(f.out) / "metrics.csv");
  write_json_file(json{{"config", resolved},
                       {"samples", cache.records.size()},
                       {"negative_collisions", collisions},
                       {"provenance", provenance("train", resolved, c.seed)}},
                  fs::path(f.out) / "train_summary.json");
  return kSuccess;
}

// ---- eval ------------------------------------------------------------------

struct EvalFlags {
  std::string data, split, encoder, model, report;
  std::optional<std::size_t> frames;
};

int cmd_eval(const EvalFlags& f, std::ostream& out) {
  const auto manifest = load_manifest(manifest_path(f.data));
  const auto split = read_split(f.split);
  const auto encoder = load_frozen_encoder(f.encoder);
  const auto model_ck = Checkpoint::load(f.model);
  const auto model = estimator_from_checkpoint(model_ck);
  std::size_t frames = model_ck.contains("config.frames") ? model_ck.u64("config.frames") : 50;
  override_with(f.frames, frames);
  const json resolved{{"data", f.data},   {"split", f.split}, {"encoder", f.encoder},
                      {"model", f.model}, {"frames", frames}};
  out << "resolved config: " << resolved.dump() << '\n';

  const auto report = evaluate(model, manifest, split, encoder, frames);
  std::map<int, std::string> names;
  for (const auto& c : manifest.classes) names[c.id] = c.name;
  const std::uint64_t seed = model_ck.contains("rng.seed") ? model_ck.u64("rng.seed") : 0;
  const json extra{{"provenance", provenance("eval", resolved, seed)}};
  export_reports(report, names, f.report, extra.dump());
  char line[128];
  std::snprintf(line, sizeof line, "top-1 accuracy %.6f over %zu samples\n", report.top1_accuracy,
                report.total);
  out << line;
  return kSuccess;
}

// ---- gradcheck -------------------------------------------------------------

struct GradcheckFlags {
  std::uint64_t seed = 0;
  std::size_t batches = 10;
  double tolerance = 1e-4;
  double h = 1e-5;
};

int cmd_gradcheck(const GradcheckFlags& f, std::ostream& out) {
  if (!(f.h > 0.0)) throw ConfigError("gradcheck: --step must be positive");
  if (f.batches == 0) throw ConfigError("gradcheck: --batches must be positive");
  LossGradCheckOptions opt;
  opt.h = f.h;
  double worst = 0.0;
  for (std::size_t i = 0; i < f.batches; ++i) {
    const auto r = check_loss_gradient(f.seed + i, opt);
    worst = std::max(worst, r.max_relative_error);
    char line[160];
    std::snprintf(line, sizeof line, "batch %zu: %zu parameters, max relative error %.3e%s\n", i,
                  r.parameters, r.max_relative_error, r.hinge_active ? " (hinge active)" : "");
    out << line;
  }
  char line[128];
  std::snprintf(line, sizeof line, "max relative error %.3e (tolerance %.1e)\n", worst, f.tolerance);
  out << line;
  return worst <= f.tolerance ? kSuccess : kVerificationFailure;
}

// ---- attn ------------------------------------------------------------------

struct AttnFlags {
  std::string data, out;
  int sample = 0;
  std::size_t frames = 50;
};

int cmd_attn(const AttnFlags& f, std::ostream& out) {
  const auto manifest = load_manifest(manifest_path(f.data));
  const auto* entry = manifest.find_sample(f.sample);
  if (!entry) throw ConfigError("no sample with id " + std::to_string(f.sample));
  const auto seq = preprocess(read_skeleton(manifest.root / entry->skeleton), f.frames);
  const auto q = attention_weights(frame_motion(bidirectional_motion(seq)));
  std::ostringstream csv;
  csv << "frame_index,q\n";
  char buf[64];
  for (std::size_t k = 0; k < q.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f\n", k, q[k]);
    csv << buf;
  }
  if (f.out.empty()) {
    out << csv.str();
  } else {
    std::ofstream file(f.out, std::ios::trunc);
    if (!file) throw IoError("cannot open for writing: " + f.out);
    file << csv.str();
  }
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Zero-shot skeleton action recognition by visual-semantic mutual information",
               "smie"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads for parallel kernels")
      ->check(CLI::PositiveNumber);

  SynthFlags synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--config", synth.config, "JSON config file");
  s->add_option("--classes", synth.classes);
  s->add_option("--seen", synth.seen);
  s->add_option("--train-per-class", synth.train_per_class);
  s->add_option("--test-per-class", synth.test_per_class);
  s->add_option("--frames", synth.frames);
  s->add_option("--joints", synth.joints);
  s->add_option("--channels", synth.channels);
  s->add_option("--semantic-dim", synth.semantic_dim);
  s->add_option("--latent-dim", synth.latent_dim, "Intrinsic dimension of the class semantic vectors");
  s->add_option("--noise", synth.noise);
  s->add_option("--seed", synth.seed);

  SplitsFlags splits;
  auto* sp = app.add_subcommand("splits", "Draw random seen/unseen class splits");
  sp->add_option("--data", splits.data, "Dataset directory")->required();
  sp->add_option("--unseen", splits.unseen, "Unseen classes per split");
  sp->add_option("--folds", splits.folds, "Number of splits");
  sp->add_option("--seed", splits.seed);
  sp->add_option("--out", splits.out, "Output directory (default DATA/splits)");

  PretrainFlags pre;
  auto* p = app.add_subcommand("pretrain", "Pretrain the frame encoder on seen classes");
  p->add_option("--data", pre.data)->required();
  p->add_option("--split", pre.split)->required();
  p->add_option("--out", pre.out, "Output directory")->required();
  p->add_option("--config", pre.config);
  p->add_option("--lr", pre.lr);
  p->add_option("--epochs", pre.epochs);
  p->add_option("--batch", pre.batch);
  p->add_option("--hidden", pre.hidden);
  p->add_option("--dim", pre.dim, "Visual feature dimension");
  p->add_option("--frames", pre.frames);
  p->add_option("--seed", pre.seed);

  TrainFlags tr;
  auto* t = app.add_subcommand("train", "Train the connection network");
  t->add_option("--data", tr.data)->required();
  t->add_option("--split", tr.split)->required();
  t->add_option("--encoder", tr.encoder, "Encoder checkpoint")->required();
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--config", tr.config);
  t->add_option("--beta", tr.beta);
  t->add_option("--lambda", tr.lambda);
  t->add_option("--p", tr.keyframes, "Masked keyframes per sequence");
  t->add_option("--lr", tr.lr);
  t->add_option("--epochs", tr.epochs);
  t->add_option("--batch", tr.batch);
  t->add_option("--seed", tr.seed);
  t->add_option("--hidden1", tr.hidden1);
  t->add_option("--hidden2", tr.hidden2);
  t->add_option("--frames", tr.frames);

  EvalFlags ev;
  auto* e = app.add_subcommand("eval", "Zero-shot evaluation on unseen classes");
  e->add_option("--data", ev.data)->required();
  e->add_option("--split", ev.split)->required();
  e->add_option("--encoder", ev.encoder)->required();
  e->add_option("--model", ev.model)->required();
  e->add_option("--report", ev.report, "Report directory")->required();
  e->add_option("--frames", ev.frames);

  GradcheckFlags gc;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of the training loss");
  g->add_option("--seed", gc.seed);
  g->add_option("--batches", gc.batches);
  g->add_option("--tolerance", gc.tolerance);
  g->add_option("--step", gc.h, "Finite-difference step");

  AttnFlags at;
  auto* a = app.add_subcommand("attn", "Dump motion attention of one sample as CSV");
  a->add_option("--data", at.data)->required();
  a->add_option("--sample", at.sample)->required();
  a->add_option("--frames", at.frames);
  a->add_option("--out", at.out, "CSV path (default stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n\n" << app.help();
    return kUsageError;
  }

  kernels::set_num_threads(threads);
  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (sp->parsed()) return cmd_splits(splits, out);
    if (p->parsed()) return cmd_pretrain(pre, out);
    if (t->parsed()) return cmd_train(tr, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (g->parsed()) return cmd_gradcheck(gc, out);
    if (a->parsed()) return cmd_attn(at, out);
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << '\n';
    return kUsageError;
  } catch (const std::invalid_argument& ex) {
    err << "invalid argument: " << ex.what() << '\n';
    return kUsageError;
  } catch (const std::out_of_range& ex) {
    err << "invalid argument: " << ex.what() << '\n';
    return kUsageError;
  } catch (const IoError& ex) {
    err << "I/O error: " << ex.what() << '\n';
    return kIoError;
  } catch (const DataError& ex) {
    err << "data error: " << ex.what() << '\n';
    return kIoError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kVerificationFailure;
  }
  return kUsageError;
}

}  // namespace smie::cli
