// SPDX-License-Identifier: Apache-2.0
#include "smie/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "smie/errors.hpp"
#include "smie/rng.hpp"
#include "smie/temporal.hpp"

namespace smie {

using json = nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 7;
constexpr std::uint64_t kShuffleStreamBase = 1000;

std::uint32_t u32(std::size_t n) { return static_cast<std::uint32_t>(n); }

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

// ---- config ----------------------------------------------------------------

std::size_t TrainConfig::resolved_keyframes() const {
  return keyframes < 0 ? default_keyframe_count(frames) : static_cast<std::size_t>(keyframes);
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be positive");
  if (epochs < 1) throw ConfigError("train: epochs must be at least 1");
  if (batch_size < 2) throw ConfigError("train: batch_size must be at least 2");
  if (!(beta >= 0.0)) throw ConfigError("train: beta must be non-negative");
  if (!(lambda >= 0.0)) throw ConfigError("train: lambda must be non-negative");
  if (frames < 1) throw ConfigError("train: frames must be positive");
  if (resolved_keyframes() > frames) throw ConfigError("train: keyframes exceed frame count");
  if (hidden1 < 1 || hidden2 < 1) throw ConfigError("train: hidden sizes must be positive");
  if (shift < 1) throw ConfigError("train: shift must be at least 1");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"lr", c.lr},           {"epochs", c.epochs},       {"batch_size", c.batch_size},
           {"beta", c.beta},       {"lambda", c.lambda},       {"keyframes", c.resolved_keyframes()},
           {"frames", c.frames},   {"seed", c.seed},           {"hidden1", c.hidden1},
           {"hidden2", c.hidden2}, {"shift", c.shift},         {"diag_batch", c.diag_batch}};
}

void update_from_json(TrainConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  static const char* const known[] = {"lr",      "epochs",  "batch_size", "beta",
                                      "lambda",  "keyframes", "frames",   "seed",
                                      "hidden1", "hidden2", "shift",      "diag_batch"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return key == k; }) == std::end(known)) {
      throw ConfigError("unknown train config key '" + key + "'");
    }
  }
  read_key(j, "lr", c.lr);
  read_key(j, "epochs", c.epochs);
  read_key(j, "batch_size", c.batch_size);
  read_key(j, "beta", c.beta);
  read_key(j, "lambda", c.lambda);
  read_key(j, "keyframes", c.keyframes);
  read_key(j, "frames", c.frames);
  read_key(j, "seed", c.seed);
  read_key(j, "hidden1", c.hidden1);
  read_key(j, "hidden2", c.hidden2);
  read_key(j, "shift", c.shift);
  read_key(j, "diag_batch", c.diag_batch);
}

// ---- features --------------------------------------------------------------

FeatureCache precompute_features(std::span<const LabeledSequence> samples,
                                 std::span<const SemanticEmbedding> semantic,
                                 const FrameEncoderParams& encoder, std::size_t frames,
                                 std::size_t keyframes) {
  if (!encoder.frozen) throw ConfigError("precompute_features: encoder is not frozen");
  if (keyframes > frames) throw ConfigError("precompute_features: keyframes exceed frames");
  FeatureCache cache;
  cache.visual_dim = encoder.feature_dim();
  for (const auto& e : semantic) {
    if (cache.semantic_dim == 0) cache.semantic_dim = e.vector.size();
    if (e.vector.size() != cache.semantic_dim) {
      throw DataError("precompute_features: semantic embeddings differ in dimension");
    }
    cache.semantic.emplace(e.class_id, e.vector);
  }
  for (const auto& s : samples) {
    if (!cache.semantic.count(s.class_id)) {
      throw DataError("precompute_features: no semantic embedding for class " +
                      std::to_string(s.class_id));
    }
  }

  cache.records.resize(samples.size());
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& s = samples[static_cast<std::size_t>(i)];
      const auto seq = preprocess(s.sequence, frames);
      const auto masked = attention_masked(seq, keyframes);
      auto& rec = cache.records[static_cast<std::size_t>(i)];
      rec.sample_id = s.sample_id;
      rec.class_id = s.class_id;
      rec.visual = encode_sequence(encoder, seq);
      rec.masked_visual = encode_sequence(encoder, masked);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::sort(cache.records.begin(), cache.records.end(),
            [](const FeatureRecord& a, const FeatureRecord& b) { return a.sample_id < b.sample_id; });
  return cache;
}

FeatureCache precompute_features(const DatasetManifest& manifest, const ClassSplit& split,
                                 const FrameEncoderParams& encoder, const TrainConfig& config) {
  split.validate(manifest.class_ids());
  const auto samples = load_samples(manifest, split.seen, Subset::kTrain);
  if (samples.empty()) throw DataError("no seen-class training samples in the dataset");
  const auto semantic = load_embeddings(manifest, split.seen);
  return precompute_features(samples, semantic, encoder, config.frames,
                             config.resolved_keyframes());
}

// ---- training --------------------------------------------------------------

NegativePairs make_negatives(std::span<const int> ids, std::span<const int> classes,
                             std::size_t shift) {
  const std::size_t b = ids.size();
  if (b < 2) throw std::invalid_argument("make_negatives: batch needs at least 2 samples");
  if (!classes.empty() && classes.size() != b) {
    throw std::invalid_argument("make_negatives: classes must match ids");
  }
  NegativePairs out;
  out.partners.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t j = (i + shift) % b;
    out.partners[i] = ids[j];
    if (!classes.empty() && classes[i] == classes[j]) ++out.collisions;
  }
  return out;
}

Matrix concat_pairs(std::span<const std::vector<double>* const> visual,
                    std::span<const std::vector<double>* const> semantic) {
  if (visual.size() != semantic.size() || visual.empty()) {
    throw std::invalid_argument("concat_pairs: mismatched pair lists");
  }
  const std::size_t dv = visual[0]->size(), ds = semantic[0]->size();
  Matrix x(visual.size(), dv + ds);
  for (std::size_t i = 0; i < visual.size(); ++i) {
    auto row = x.row(i);
    std::copy(visual[i]->begin(), visual[i]->end(), row.begin());
    std::copy(semantic[i]->begin(), semantic[i]->end(), row.begin() + static_cast<std::ptrdiff_t>(dv));
  }
  return x;
}

TrainState init_train_state(const FeatureCache& cache, const TrainConfig& config) {
  config.validate();
  if (cache.visual_dim == 0 || cache.semantic_dim == 0) {
    throw DataError("init_train_state: empty feature cache");
  }
  TrainState s;
  s.seed = config.seed;
  s.estimator = init_mlp3({cache.visual_dim + cache.semantic_dim, config.hidden1, config.hidden2},
                          mix_seed(config.seed, kInitStream));
  s.adam = AdamState::zeros_like(tensors(std::as_const(s.estimator)));
  return s;
}

namespace {

double diagnostic_bound(const Mlp3Params& estimator, const FeatureCache& cache,
                        std::size_t diag_batch) {
  const std::size_t b = std::min(diag_batch, cache.records.size());
  if (b < 2) return 0.0;
  // evenly spaced records, so the fixed probe set spans every class
  std::vector<const FeatureRecord*> probe(b);
  for (std::size_t i = 0; i < b; ++i) probe[i] = &cache.records[i * cache.records.size() / b];
  std::vector<const std::vector<double>*> vis, sem;
  vis.reserve(b * b);
  sem.reserve(b * b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto* a = &cache.semantic.at(probe[i]->class_id);
    for (std::size_t j = 0; j < b; ++j) {
      vis.push_back(&probe[j]->visual);
      sem.push_back(a);
    }
  }
  const auto flat = mlp_forward(estimator, concat_pairs(vis, sem));
  Matrix scores(b, b);
  scores.data = flat;
  return infonce_diagnostic(scores).bound;
}

}  // namespace

EpochMetrics train_epoch(TrainState& state, const FeatureCache& cache, const TrainConfig& config,
                         double lr) {
  const std::size_t n = cache.records.size();
  if (n < 2) throw DataError("train_epoch: need at least 2 cached samples");
  if (state.estimator.layer1.in() != cache.visual_dim + cache.semantic_dim) {
    throw std::invalid_argument("train_epoch: estimator input does not match cache dims");
  }
  const LossConfig loss_cfg = config.loss();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(state.seed, kShuffleStreamBase + state.epoch));
  rng.shuffle(order);

  EpochMetrics em;
  em.epoch = state.epoch;
  em.lr = lr;
  Mlp3Cache fwd;
  for (std::size_t start = 0; start < n; start += config.batch_size) {
    const std::size_t b = std::min(config.batch_size, n - start);
    if (b < 2) continue;

    std::vector<int> positions(b), classes(b);
    for (std::size_t i = 0; i < b; ++i) {
      positions[i] = static_cast<int>(order[start + i]);
      classes[i] = cache.records[order[start + i]].class_id;
    }
    const auto negatives = make_negatives(positions, classes, config.shift);
    em.collisions += negatives.collisions;

    // rows [0,b): positives, [b,2b): masked positives, [2b,3b): negatives
    std::vector<const std::vector<double>*> vis(3 * b), sem(3 * b);
    for (std::size_t i = 0; i < b; ++i) {
      const auto& rec = cache.records[static_cast<std::size_t>(positions[i])];
      const auto* a = &cache.semantic.at(rec.class_id);
      vis[i] = &rec.visual;
      vis[b + i] = &rec.masked_visual;
      vis[2 * b + i] = &cache.records[static_cast<std::size_t>(negatives.partners[i])].visual;
      sem[i] = sem[b + i] = sem[2 * b + i] = a;
    }
    const auto scores = mlp_forward(state.estimator, concat_pairs(vis, sem), &fwd);
    const std::span<const double> all(scores);
    const auto pos = all.subspan(0, b), masked = all.subspan(b, b), neg = all.subspan(2 * b, b);

    const auto res = evaluate_loss(pos, masked, neg, loss_cfg);
    if (!std::isfinite(res.loss)) {
      throw NumericError("train_epoch: non-finite loss at epoch " + std::to_string(state.epoch) +
                         ", batch starting " + std::to_string(start) + " (m=" +
                         std::to_string(res.m) + ", m_hat=" + std::to_string(res.m_hat) + ")");
    }
    const auto sg = loss_score_gradients(pos, masked, neg, loss_cfg);
    std::vector<double> upstream;
    upstream.reserve(3 * b);
    upstream.insert(upstream.end(), sg.pos.begin(), sg.pos.end());
    upstream.insert(upstream.end(), sg.masked_pos.begin(), sg.masked_pos.end());
    upstream.insert(upstream.end(), sg.neg.begin(), sg.neg.end());

    const auto grads = mlp_backward(state.estimator, fwd, upstream);
    adam_step(tensors(state.estimator), tensors(grads.params), state.adam, lr);

    em.m += res.m;
    em.m_hat += res.m_hat;
    em.l1 += res.l1;
    em.l2 += res.l2;
    em.loss += res.loss;
    ++em.batches;
  }
  if (em.batches > 0) {
    const double k = static_cast<double>(em.batches);
    em.m /= k;
    em.m_hat /= k;
    em.l1 /= k;
    em.l2 /= k;
    em.loss /= k;
  }
  em.infonce_bound = diagnostic_bound(state.estimator, cache, config.diag_batch);
  state.epoch += 1;
  state.history.push_back(em);
  return em;
}

void train(TrainState& state, const FeatureCache& cache, const TrainConfig& config,
           const EpochCallback& on_epoch) {
  config.validate();
  const CosineSchedule schedule{config.lr, config.epochs};
  while (state.epoch < config.epochs) {
    const auto em = train_epoch(state, cache, config, schedule.lr(state.epoch));
    if (on_epoch) on_epoch(em);
  }
}

// ---- persistence -----------------------------------------------------------

Checkpoint train_state_to_checkpoint(const TrainState& state) {
  Checkpoint ck;
  add_linear(ck, "estimator.layer1", state.estimator.layer1);
  add_linear(ck, "estimator.layer2", state.estimator.layer2);
  add_linear(ck, "estimator.layer3", state.estimator.layer3);
  const auto names = tensor_names();
  for (std::size_t t = 0; t < names.size(); ++t) {
    ck.add("adam.m." + names[t], {u32(state.adam.first_moment[t].size())},
           state.adam.first_moment[t]);
    ck.add("adam.v." + names[t], {u32(state.adam.second_moment[t].size())},
           state.adam.second_moment[t]);
  }
  ck.add("adam.config", {3},
         {state.adam.config.beta1, state.adam.config.beta2, state.adam.config.epsilon});
  ck.add_u64("adam.step", state.adam.step);
  ck.add_u64("epoch", state.epoch);
  ck.add_u64("rng.seed", state.seed);
  constexpr std::uint32_t kCols = 10;
  std::vector<double> rows;
  for (const auto& h : state.history) {
    rows.insert(rows.end(), {static_cast<double>(h.epoch), h.lr, h.m, h.m_hat, h.l1, h.l2, h.loss,
                             h.infonce_bound, static_cast<double>(h.collisions),
                             static_cast<double>(h.batches)});
  }
  ck.add("metrics", {u32(state.history.size()), kCols}, std::move(rows));
  return ck;
}

Mlp3Params estimator_from_checkpoint(const Checkpoint& ck) {
  Mlp3Params p;
  p.layer1 = read_linear(ck, "estimator.layer1");
  p.layer2 = read_linear(ck, "estimator.layer2");
  p.layer3 = read_linear(ck, "estimator.layer3");
  if (p.layer2.in() != p.layer1.out() || p.layer3.in() != p.layer2.out() || p.layer3.out() != 1) {
    throw DataError("checkpoint: estimator layer dims do not chain");
  }
  return p;
}

TrainState train_state_from_checkpoint(const Checkpoint& ck) {
  TrainState s;
  s.estimator = estimator_from_checkpoint(ck);
  const auto names = tensor_names();
  const auto params = tensors(std::as_const(s.estimator));
  for (std::size_t t = 0; t < names.size(); ++t) {
    auto m = ck.get("adam.m." + names[t]).values;
    auto v = ck.get("adam.v." + names[t]).values;
    if (m.size() != params[t].size() || v.size() != params[t].size()) {
      throw DataError("checkpoint: optimizer state does not match " + names[t]);
    }
    s.adam.first_moment.push_back(std::move(m));
    s.adam.second_moment.push_back(std::move(v));
  }
  const auto& cfg = ck.get("adam.config").values;
  if (cfg.size() != 3) throw DataError("checkpoint: bad adam.config");
  s.adam.config = {cfg[0], cfg[1], cfg[2]};
  s.adam.step = ck.u64("adam.step");
  s.epoch = ck.u64("epoch");
  s.seed = ck.u64("rng.seed");
  const auto& metrics = ck.get("metrics");
  if (metrics.dims.size() != 2 || metrics.dims[1] != 10) throw DataError("checkpoint: bad metrics");
  for (std::size_t r = 0; r < metrics.dims[0]; ++r) {
    const double* row = metrics.values.data() + r * 10;
    s.history.push_back({static_cast<std::size_t>(row[0]), row[1], row[2], row[3], row[4], row[5],
                         row[6], row[7], static_cast<std::size_t>(row[8]),
                         static_cast<std::size_t>(row[9])});
  }
  return s;
}

void write_metrics_csv(std::span<const EpochMetrics> history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "epoch,lr,m,m_hat,L1,L2,L,infonce_bound\n";
  char line[256];
  for (const auto& h : history) {
    std::snprintf(line, sizeof line, "%zu,%.6e,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", h.epoch, h.lr, h.m,
                  h.m_hat, h.l1, h.l2, h.loss, h.infonce_bound);
    out << line;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace smie
