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
#include <functional>
#include <string>
#include <vector>

#include "spmix/config.hpp"
#include "spmix/dataset.hpp"
#include "spmix/eval.hpp"
#include "spmix/training.hpp"

namespace spmix {

/// Images already resized to the encoder input, with the class structure
/// derived from the training counts.
struct ExperimentData {
  std::vector<std::string> class_names;
  TrainingData train;
  std::vector<ImageTensor> test_images;
  std::vector<int> test_labels;
  SubsetPartition partition;
};

ExperimentData make_experiment_data(std::vector<std::string> class_names,
                                    std::vector<ImageTensor> train_images,
                                    std::vector<int> train_labels,
                                    std::vector<ImageTensor> test_images,
                                    std::vector<int> test_labels, SubsetThresholds thresholds);

using Logger = std::function<void(const std::string&)>;

struct RunResult {
  Variant variant = Variant::kSpmix;
  std::uint64_t seed = 0;
  std::vector<EpochMetrics> epochs;
  std::vector<double> probe_losses;
  MetricsReport report;
};

// Train, linear probe on the unaugmented training images, evaluate on test.
RunResult run_variant(const RunConfig& config, Variant variant, std::uint64_t seed,
                      const ExperimentData& data, const Logger& log = {});

// Epoch log lines "epoch loss grad_norm seconds"; seconds is "-" when
// wall times are omitted.
std::string format_epoch_line(const EpochMetrics& metrics, bool with_time);

struct MedianMetrics {
  Variant variant = Variant::kSpmix;
  std::size_t runs = 0;
  std::optional<double> many, medium, few;
  double total = 0.0;
  double macro_f1 = 0.0;
};

double median(std::vector<double> values);
// One entry per variant, in first-seen order.
std::vector<MedianMetrics> median_by_variant(const std::vector<RunResult>& runs);

// One row per (variant, seed) followed by per-variant medians.
std::string format_runs_table(const std::vector<RunResult>& runs);
// Four rows over {patch-based, saliency-guided}, median Acc and F1 in percent.
// Variants without runs show n/a.
std::string format_ablation_grid(const std::vector<RunResult>& runs);

// Writes `count` image-level mixed samples (tail view 1 blended with its
// head partner's view 1) to dir/mixed, side-by-side tail | head | mixed
// panels to dir/panels, and dir/manifest.tsv labelling each mixed image with
// its tail class.
Manifest materialize_mixed(const RunConfig& config, const TrainingData& data,
                           const std::vector<std::string>& class_names, std::size_t count,
                           const std::filesystem::path& dir);

// Places images left to right; all must share height and channel count.
ImageTensor hstack(const std::vector<ImageTensor>& images);

}  // namespace spmix
