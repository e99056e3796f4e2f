// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace smie {

/// K x J x C joint coordinates, stored (frame, joint, channel) row-major.
struct SkeletonSequence {
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::size_t channels = 0;
  std::vector<double> values;

  SkeletonSequence() = default;
  SkeletonSequence(std::size_t k, std::size_t j, std::size_t c, double fill = 0.0)
      : frames(k), joints(j), channels(c), values(k * j * c, fill) {}

  std::size_t frame_size() const { return joints * channels; }
  double& at(std::size_t k, std::size_t j, std::size_t c) {
    return values[(k * joints + j) * channels + c];
  }
  double at(std::size_t k, std::size_t j, std::size_t c) const {
    return values[(k * joints + j) * channels + c];
  }
  std::span<double> frame(std::size_t k) {
    return {values.data() + k * frame_size(), frame_size()};
  }
  std::span<const double> frame(std::size_t k) const {
    return {values.data() + k * frame_size(), frame_size()};
  }

  /// Throws std::invalid_argument on zero dims, wrong payload length or
  /// non-finite values.
  void validate() const;
  bool operator==(const SkeletonSequence&) const = default;
};

struct SemanticEmbedding {
  int class_id = 0;
  std::vector<double> vector;
};

/// Which role a sample plays. Samples listed without a subset serve both.
enum class Subset { kTrain, kTest, kAll };

struct ClassEntry {
  int id = 0;
  std::string name;
  std::filesystem::path embedding;  // relative to the manifest directory
};

struct SampleEntry {
  int id = 0;
  int class_id = 0;
  std::filesystem::path skeleton;  // relative to the manifest directory
  Subset subset = Subset::kAll;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ClassEntry> classes;
  std::vector<SampleEntry> samples;

  const ClassEntry* find_class(int id) const;
  const SampleEntry* find_sample(int id) const;
  std::vector<int> class_ids() const;
};

/// Disjoint seen/unseen class ids, both kept sorted ascending.
struct ClassSplit {
  std::vector<int> seen;
  std::vector<int> unseen;

  /// Throws DataError if the sets overlap, either is empty, or an id is not
  /// one of `class_ids` (when given).
  void validate(std::span<const int> class_ids = {}) const;
  bool operator==(const ClassSplit&) const = default;
};

// ---- file formats ----------------------------------------------------------

DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

SkeletonSequence read_skeleton(const std::filesystem::path& path);
void write_skeleton(const SkeletonSequence& seq, const std::filesystem::path& path);

std::vector<double> read_embedding(const std::filesystem::path& path);
void write_embedding(std::span<const double> vector, const std::filesystem::path& path);

ClassSplit read_split(const std::filesystem::path& path);
void write_split(const ClassSplit& split, const std::filesystem::path& path);

// ---- preprocessing ---------------------------------------------------------

std::vector<double> l2_normalize(std::span<const double> vector);

/// Removes frames whose every value is exactly zero.
SkeletonSequence drop_invalid_frames(const SkeletonSequence& seq);

/// Endpoint-aligned linear resampling to `target_frames` frames.
SkeletonSequence resample_time(const SkeletonSequence& seq, std::size_t target_frames);

/// drop_invalid_frames followed by resample_time.
SkeletonSequence preprocess(const SkeletonSequence& seq, std::size_t target_frames);

std::vector<ClassSplit> make_splits(const DatasetManifest& manifest, std::size_t n_unseen,
                                    std::size_t n_folds, std::uint64_t seed);

// ---- loading ---------------------------------------------------------------

struct LabeledSequence {
  int sample_id = 0;
  int class_id = 0;
  SkeletonSequence sequence;
};

/// Reads every sample of `classes` usable in `role` (kTrain or kTest), in
/// ascending sample-id order.
std::vector<LabeledSequence> load_samples(const DatasetManifest& manifest,
                                          std::span<const int> classes, Subset role);

/// Reads and L2-normalizes the embeddings of `classes`, in the given order.
std::vector<SemanticEmbedding> load_embeddings(const DatasetManifest& manifest,
                                               std::span<const int> classes);

// ---- synthetic data --------------------------------------------------------

struct SynthConfig {
  std::size_t n_classes = 10;
  std::size_t n_seen = 7;
  std::size_t samples_per_class_train = 200;
  std::size_t samples_per_class_test = 50;
  std::size_t frames = 50;
  std::size_t joints = 8;
  std::size_t channels = 3;
  std::size_t semantic_dim = 32;
  /// Dimension of the subspace the class semantic vectors are drawn from;
  /// equal to semantic_dim means uniform on the whole sphere.
  std::size_t latent_dim = 3;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthResult {
  DatasetManifest manifest;
  ClassSplit split;
};

/// Writes manifest.json, split.json, embeddings/ and skeletons/ under `out_dir`.
SynthResult generate_synthetic(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace smie
