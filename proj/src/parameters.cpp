/*
 * Copyright 2026 The SPMix Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include "spmix/parameters.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "spmix/error.hpp"

namespace spmix {

Tensor& ParameterSet::add(const std::string& name, Tensor tensor) {
  require(!contains(name), "duplicate parameter name '" + name + "'");
  entries_.emplace_back(name, std::move(tensor));
  return entries_.back().second;
}

Tensor& ParameterSet::get(const std::string& name) {
  for (auto& [key, tensor] : entries_) {
    if (key == name) return tensor;
  }
  throw ContractViolation("unknown parameter '" + name + "'");
}

const Tensor& ParameterSet::get(const std::string& name) const {
  return const_cast<ParameterSet*>(this)->get(name);
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& entry : entries_) {
    if (entry.first == name) return true;
  }
  return false;
}

std::size_t ParameterSet::total_elements() const {
  std::size_t total = 0;
  for (const auto& entry : entries_) total += entry.second.numel();
  return total;
}

void ParameterSet::set_requires_grad(bool enabled) {
  for (auto& entry : entries_) entry.second.requires_grad = enabled;
}

void ParameterSet::zero_grad() {
  for (auto& entry : entries_) entry.second.zero_grad();
}

bool ParameterSet::aligned_with(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first ||
        entries_[i].second.shape != other.entries_[i].second.shape) {
      return false;
    }
  }
  return true;
}

namespace {

constexpr char kMagic[4] = {'S', 'P', 'M', 'X'};

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
bool read_le(std::istream& in, T& value) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) return false;
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  std::memcpy(&value, bytes, sizeof(T));
  return true;
}

}  // namespace

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& [name, tensor] : params) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape) write_le<std::uint64_t>(out, d);
    for (double v : tensor.data) write_le<double>(out, v);
  }
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  std::uint32_t version = 0;
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("not an SPMX checkpoint: " + path.string());
  }
  if (!read_le(in, version) || version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version in " + path.string());
  }
  ParameterSet params;
  while (in.peek() != std::char_traits<char>::eof()) {
    std::uint32_t name_len = 0, rank = 0;
    if (!read_le(in, name_len)) throw FormatError("truncated checkpoint: " + path.string());
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len) || !read_le(in, rank)) {
      throw FormatError("truncated checkpoint record in " + path.string());
    }
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint64_t v = 0;
      if (!read_le(in, v)) throw FormatError("truncated dims for '" + name + "' in " + path.string());
      d = static_cast<std::size_t>(v);
    }
    Tensor tensor(shape);
    for (double& v : tensor.data) {
      if (!read_le(in, v)) throw FormatError("truncated data for '" + name + "' in " + path.string());
    }
    params.add(name, std::move(tensor));
  }
  return params;
}

}  // namespace spmix
