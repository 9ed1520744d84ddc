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
#include <vector>

#include "spmix/dataset.hpp"
#include "spmix/encoder.hpp"
#include "spmix/eval.hpp"
#include "spmix/training.hpp"

namespace spmix {

/// Every tunable of a run. Serialized as "key = value" lines; '#' starts a
/// comment. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  // Leaves wall-clock times out of written logs so reruns match byte for byte.
  bool deterministic = true;
  EncoderConfig encoder;
  TrainConfig train;
  ProbeConfig probe;
  SubsetThresholds subsets;

  // Resolved train config: grid follows the encoder, strategy the variant.
  TrainConfig resolved_train() const;

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();
  static std::string describe(const std::string& key);
  // All keys with their values, each preceded by its description.
  std::string to_text() const;
  void validate() const;
};

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace spmix
