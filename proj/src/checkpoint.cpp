// SPDX-License-Identifier: Apache-2.0
#include "smie/checkpoint.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "binary_io.hpp"
#include "smie/errors.hpp"

namespace smie {

namespace {
constexpr std::array<unsigned char, 4> kMagic{0x53, 0x4D, 0x43, 0x4B};  // SMCK
constexpr std::uint32_t kVersion = 1;

std::size_t element_count(const std::vector<std::uint32_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}
}  // namespace

void Checkpoint::add(std::string name, std::vector<std::uint32_t> dims,
                     std::vector<double> values) {
  if (element_count(dims) != values.size()) {
    throw std::invalid_argument("checkpoint tensor '" + name + "': dims do not match payload");
  }
  if (contains(name)) throw std::invalid_argument("checkpoint tensor '" + name + "' added twice");
  tensors_.push_back({std::move(name), std::move(dims), std::move(values)});
}

void Checkpoint::add_u64(std::string name, std::uint64_t value) {
  add(std::move(name), {2},
      {static_cast<double>(value >> 32), static_cast<double>(value & 0xFFFFFFFFULL)});
}

bool Checkpoint::contains(const std::string& name) const {
  return std::any_of(tensors_.begin(), tensors_.end(),
                     [&](const NamedTensor& t) { return t.name == name; });
}

const NamedTensor& Checkpoint::get(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw DataError("checkpoint: missing tensor '" + name + "'");
}

double Checkpoint::scalar(const std::string& name) const {
  const auto& t = get(name);
  if (t.values.size() != 1) throw DataError("checkpoint: '" + name + "' is not a scalar");
  return t.values[0];
}

std::uint64_t Checkpoint::u64(const std::string& name) const {
  const auto& t = get(name);
  if (t.values.size() != 2) throw DataError("checkpoint: '" + name + "' is not a u64");
  return (static_cast<std::uint64_t>(t.values[0]) << 32) |
         static_cast<std::uint64_t>(t.values[1]);
}

void Checkpoint::save(const std::filesystem::path& path) const {
  detail::ByteWriter out;
  out.bytes(kMagic.data(), 4);
  out.u32(kVersion);
  out.u32(static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& t : tensors_) {
    out.u32(static_cast<std::uint32_t>(t.name.size()));
    out.bytes(t.name.data(), t.name.size());
    out.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) out.u32(d);
    for (double v : t.values) out.f64(v);
  }
  out.save(path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  auto in = detail::ByteReader::load(path);
  in.expect_magic(kMagic);
  const auto version = in.u32();
  if (version != kVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const auto count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = in.str(in.u32());
    const auto rank = in.u32();
    for (std::uint32_t r = 0; r < rank; ++r) t.dims.push_back(in.u32());
    const std::size_t n = element_count(t.dims);
    if (in.remaining() < n * sizeof(double)) throw DataError(path.string() + ": truncated");
    t.values.resize(n);
    for (auto& v : t.values) v = in.f64();
    ck.tensors_.push_back(std::move(t));
  }
  if (in.remaining() != 0) throw DataError(path.string() + ": trailing bytes");
  return ck;
}

}  // namespace smie
