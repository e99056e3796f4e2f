// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace smie {

/// One named tensor of an SMCK checkpoint.
struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  bool operator==(const NamedTensor&) const = default;
};

/// Ordered collection of tensors with lookup by name.
class Checkpoint {
 public:
  void add(std::string name, std::vector<std::uint32_t> dims, std::vector<double> values);
  void add_scalar(std::string name, double value) { add(std::move(name), {1}, {value}); }
  /// Stores a 64-bit integer losslessly as two 32-bit halves.
  void add_u64(std::string name, std::uint64_t value);

  bool contains(const std::string& name) const;
  /// Throws DataError when missing.
  const NamedTensor& get(const std::string& name) const;
  double scalar(const std::string& name) const;
  std::uint64_t u64(const std::string& name) const;

  const std::vector<NamedTensor>& tensors() const { return tensors_; }

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  bool operator==(const Checkpoint&) const = default;

 private:
  std::vector<NamedTensor> tensors_;
};

}  // namespace smie
