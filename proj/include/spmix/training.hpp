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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spmix/encoder.hpp"
#include "spmix/image.hpp"
#include "spmix/mixup.hpp"
#include "spmix/parameters.hpp"
#include "spmix/random.hpp"
#include "spmix/tensor.hpp"

namespace spmix {

// Supervised contrastive loss over a pool of unit embeddings (M, P). Each
// anchor is contrasted against all other pool members; positives share its
// label. Anchors without positives are left out of the mean.
Var supcon_loss(Var embeddings, std::span<const int> labels, double temperature);

// Pool = query embeddings (B, P) followed by key embeddings (B, P), labels
// repeated. Gradients reach the query side only.
Var scl_loss(Var query, const Tensor& key, std::span<const int> labels, double temperature);

struct AdamWConfig {
  double lr = 5e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.1;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay. Moments are allocated on the first step
/// and stay aligned with the parameter set's order.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  // Uses each parameter's grad (missing grads count as zero). Throws
  // NumericError naming the parameter on a non-finite gradient.
  void step(ParameterSet& params);

  std::size_t steps() const { return steps_; }
  const AdamWConfig& config() const { return config_; }
  AdamWConfig& config() { return config_; }
  std::span<const double> first_moment(std::size_t index) const { return m_.at(index); }
  std::span<const double> second_moment(std::size_t index) const { return v_.at(index); }
  void reset_moments();

 private:
  AdamWConfig config_;
  std::size_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Global L2 norm of all parameter gradients.
double gradient_norm(const ParameterSet& params);

/// Class structure of a training set.
struct ClassIndex {
  std::vector<std::vector<std::size_t>> samples_by_class;
  std::vector<bool> is_head;
  std::vector<std::size_t> head_samples;

  static ClassIndex build(std::span<const int> labels, std::size_t num_classes,
                          const std::vector<bool>& head_classes);
  std::size_t num_classes() const { return samples_by_class.size(); }
};

struct BatchItem {
  std::size_t sample = 0;
  int label = 0;
  std::optional<std::size_t> partner;
};

// Classes uniformly, then a sample uniformly within the class. Tail draws get
// a uniformly drawn head-class partner when `with_partners` is set; head
// draws never do.
std::vector<BatchItem> sample_balanced_batch(const ClassIndex& index, std::size_t batch_size,
                                             Rng& rng, bool with_partners = true);
// Samples uniformly over the whole training set (natural long-tailed draw).
// With `with_partners`, every draw gets a uniformly drawn partner of any class.
std::vector<BatchItem> sample_instance_batch(const ClassIndex& index, std::size_t batch_size,
                                             Rng& rng, bool with_partners = false);

enum class Variant { kCe, kCeResample, kVanillaMixup, kPatchOnly, kSaliencyOnly, kSpmix };

std::string to_string(Variant variant);
Variant parse_variant(const std::string& name);
bool uses_contrastive_loss(Variant variant);
std::optional<MixStrategy> mix_strategy_for(Variant variant);

enum class MixupObjective { kContrastive, kCrossEntropy };

struct TrainConfig {
  Variant variant = Variant::kSpmix;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  // 0 = ceil(train size / batch size).
  std::size_t steps_per_epoch = 0;
  double temperature = 0.2;
  double key_momentum = 0.5;
  AdamWConfig optimizer{.lr = 1e-3};
  AugmentationPolicy augmentation;
  MixConfig mix;
  // Vanilla mixup only: SCL with tail labels, or CE with mixed labels.
  MixupObjective mixup_objective = MixupObjective::kContrastive;
};

/// In-memory training images, already at the encoder's input size.
struct TrainingData {
  std::vector<ImageTensor> images;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::vector<bool> head_classes;
};

struct StepStats {
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;
};

class Trainer {
 public:
  Trainer(const EncoderConfig& encoder, const TrainConfig& config, const TrainingData& data,
          std::uint64_t seed);

  // One optimizer step on a freshly sampled batch.
  StepStats step();
  EpochMetrics train_epoch();
  std::size_t steps_per_epoch() const;

  EncoderPair& encoders() { return pair_; }
  const EncoderPair& encoders() const { return pair_; }
  // Linear classifier used by the cross-entropy variants; empty otherwise.
  ParameterSet& classifier() { return classifier_; }
  AdamW& optimizer() { return optimizer_; }
  const EncoderConfig& encoder_config() const { return encoder_; }
  const TrainConfig& config() const { return config_; }
  std::size_t epochs_done() const { return epochs_done_; }

 private:
  struct PreparedBatch;
  PreparedBatch prepare(Rng& rng);
  StepStats contrastive_step(const PreparedBatch& batch);
  StepStats cross_entropy_step(const PreparedBatch& batch);

  EncoderConfig encoder_;
  TrainConfig config_;
  const TrainingData& data_;
  ClassIndex index_;
  EncoderPair pair_;
  ParameterSet classifier_;
  AdamW optimizer_;
  AdamW classifier_optimizer_;
  Rng rng_;
  std::size_t epochs_done_ = 0;
};

}  // namespace spmix
