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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spmix/dataset.hpp"
#include "spmix/encoder.hpp"
#include "spmix/parameters.hpp"
#include "spmix/tensor.hpp"

namespace spmix {

// Pooled encoder features (N, D) of unaugmented images, computed without
// gradients in chunks of `batch_size`.
Tensor extract_features(ParameterSet& encoder, const EncoderConfig& config,
                        std::span<const ImageTensor> images, std::size_t batch_size = 64);

struct ProbeConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  double lr = 1e-2;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

/// Linear classifier over standardized features. Weights start at zero, so an
/// untrained probe predicts class 0 everywhere.
struct LinearProbe {
  Tensor weight;  // (D, K)
  Tensor bias;    // (K)
  Tensor mean;    // (D)
  Tensor scale;   // (D), 1 / std

  std::size_t dim() const { return weight.dim(0); }
  std::size_t classes() const { return weight.dim(1); }
  ParameterSet to_parameters() const;
  static LinearProbe from_parameters(const ParameterSet& params);
};

struct ProbeResult {
  LinearProbe probe;
  std::vector<double> epoch_losses;
};

// Cross-entropy with class-balanced batches.
ProbeResult train_linear_probe(const Tensor& features, std::span<const int> labels,
                               std::size_t num_classes, const ProbeConfig& config);
Tensor probe_logits(const LinearProbe& probe, const Tensor& features);
// Argmax; ties go to the lowest class id.
std::vector<int> predict(const LinearProbe& probe, const Tensor& features);

struct MetricsReport {
  std::size_t num_classes = 0;
  // confusion[t * K + p] counts true class t predicted as p.
  std::vector<std::size_t> confusion;
  std::vector<double> precision, recall, f1;
  std::optional<double> many, medium, few;  // empty subset -> n/a
  double total = 0.0;
  double macro_f1 = 0.0;

  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return confusion[truth * num_classes + predicted];
  }
};

MetricsReport metrics_from_confusion(const std::vector<std::size_t>& confusion,
                                     std::size_t num_classes, const SubsetPartition& partition);
MetricsReport evaluate(std::span<const int> truth, std::span<const int> predicted,
                       std::size_t num_classes, const SubsetPartition& partition);

std::string format_report_table(const MetricsReport& report,
                                const std::vector<std::string>& class_names);
// One "key=value" per line; fixed 6-digit formatting.
std::string format_report_kv(const MetricsReport& report,
                             const std::vector<std::string>& class_names);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace spmix
