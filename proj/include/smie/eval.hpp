// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "smie/data.hpp"
#include "smie/encoder.hpp"
#include "smie/nn.hpp"

namespace smie {

/// g = T(v ++ a).
double score(const Mlp3Params& model, std::span<const double> visual,
             std::span<const double> semantic);

/// Scores of `visual` against every candidate, in candidate order.
std::vector<double> score_all(const Mlp3Params& model, std::span<const double> visual,
                              std::span<const SemanticEmbedding> candidates);

/// Id of the highest score; ties go to the smallest class id.
int argmax_class(std::span<const double> scores, std::span<const int> class_ids);

int predict(const Mlp3Params& model, std::span<const double> visual,
            std::span<const SemanticEmbedding> unseen);

struct EvalSample {
  int sample_id = 0;
  int class_id = 0;
  std::vector<double> visual;
};

struct SampleScores {
  int sample_id = 0;
  int true_class = 0;
  int predicted_class = 0;
  std::vector<double> scores;  // one per EvalReport::classes entry
};

struct ClassAccuracy {
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  std::vector<int> classes;                  // unseen ids, ascending
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted], index into classes
  std::map<int, ClassAccuracy> per_class;
  std::vector<SampleScores> samples;         // ascending sample id
  double top1_accuracy = 0.0;
  std::size_t total = 0;
};

/// Scores every pair (visual, semantic) for all candidates at once.
using BatchScorer = std::function<std::vector<double>(
    std::span<const double> visual, std::span<const SemanticEmbedding> candidates)>;

/// Tallies predictions of `scorer` over `test`; every sample's class must be
/// among `unseen`.
EvalReport evaluate_features(std::span<const EvalSample> test,
                             std::span<const SemanticEmbedding> unseen, const BatchScorer& scorer);

/// Unseen-class test samples of `split`: preprocess, encode (no masking),
/// predict, tally.
EvalReport evaluate(const Mlp3Params& model, const DatasetManifest& manifest,
                    const ClassSplit& split, const FrameEncoderParams& encoder,
                    std::size_t frames);

/// Writes confusion.csv, per_class.csv, scores.csv and summary.json.
/// `extra_summary` is a JSON object merged into summary.json.
void export_reports(const EvalReport& report, const std::map<int, std::string>& class_names,
                    const std::filesystem::path& out_dir, const std::string& extra_summary = "{}");

}  // namespace smie
