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


#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "spmix/tensor.hpp"

namespace spmix {

/// Ordered, name-addressable collection of tensors. Insertion order is the
/// iteration order and the on-disk order, so two sets built the same way are
/// name-aligned position by position.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Tensor tensor);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void set_requires_grad(bool enabled);
  void zero_grad();
  // True when names, order and shapes agree.
  bool aligned_with(const ParameterSet& other) const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Binary checkpoint: "SPMX", u32 version, then until EOF one record per
// tensor: u32 name length, UTF-8 name, u32 rank, u64 dims[rank], float64
// data. All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);
ParameterSet load_checkpoint(const std::filesystem::path& path);

}  // namespace spmix
