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


#include "spmix/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "spmix/error.hpp"
#include "spmix/kernels.hpp"

namespace spmix {

Var supcon_loss(Var embeddings, std::span<const int> labels, double temperature) {
  require(temperature > 0.0, "scl_loss: temperature must be positive");
  const Tensor& zv = embeddings.value();
  require(zv.rank() == 2 && zv.dim(0) == labels.size(),
          "scl_loss: embeddings " + shape_string(zv.shape) + " do not match " +
              std::to_string(labels.size()) + " labels");
  const std::size_t m = zv.dim(0), p = zv.dim(1);
  require(m >= 2, "scl_loss: need at least two embeddings");

  // logits[i][j] = z_i . z_j / tau
  std::vector<double> logits(m * m);
  kernels::gemm(m, m, p, zv.data.data(), false, zv.data.data(), true, logits.data(), false);
  for (double& v : logits) v /= temperature;

  // coeff[i][j] = dL/dlogits[i][j], filled while computing the loss.
  std::vector<double> coeff(m * m, 0.0);
  std::vector<double> probs(m);
  std::size_t anchors = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t positives = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i && labels[j] == labels[i]) ++positives;
    }
    if (positives == 0) continue;
    ++anchors;
    const double* row = logits.data() + i * m;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) mx = std::max(mx, row[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      probs[j] = j == i ? 0.0 : std::exp(row[j] - mx);
      denom += probs[j];
    }
    const double log_denom = mx + std::log(denom);
    double positive_sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i && labels[j] == labels[i]) positive_sum += row[j] - log_denom;
    }
    total += -positive_sum / static_cast<double>(positives);
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      const double positive = labels[j] == labels[i] ? 1.0 / static_cast<double>(positives) : 0.0;
      coeff[i * m + j] = probs[j] / denom - positive;
    }
  }
  const double loss = anchors == 0 ? 0.0 : total / static_cast<double>(anchors);
  if (anchors > 0) {
    for (double& c : coeff) c /= static_cast<double>(anchors);
  }

  const std::size_t iz = embeddings.id();
  return embeddings.graph().record(
      Tensor({1}, std::vector<double>{loss}), {iz},
      [iz, m, p, temperature, coeff = std::move(coeff)](Graph& g, std::size_t self) {
        const double gy = g.grad(self)[0];
        // dZ = (C + C^T) Z / tau
        std::vector<double> sym(m * m);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < m; ++j)
            sym[i * m + j] = gy * (coeff[i * m + j] + coeff[j * m + i]) / temperature;
        kernels::gemm(m, p, m, sym.data(), false, g.value(iz).data.data(), false,
                      g.grad_accumulator(iz).data(), true);
      });
}

Var scl_loss(Var query, const Tensor& key, std::span<const int> labels, double temperature) {
  require(temperature > 0.0, "scl_loss: temperature must be positive");
  const Tensor& qv = query.value();
  require(qv.rank() == 2 && qv.shape == key.shape && qv.dim(0) == labels.size(),
          "scl_loss: query " + shape_string(qv.shape) + " and key " + shape_string(key.shape) +
              " must both be [B,P] with B = " + std::to_string(labels.size()));
  require(labels.size() >= 2, "scl_loss: batch size must be at least 2");
  std::vector<int> pool_labels(labels.begin(), labels.end());
  pool_labels.insert(pool_labels.end(), labels.begin(), labels.end());
  Var pool = concat_rows(query, query.graph().constant(key));
  return supcon_loss(pool, pool_labels, temperature);
}

void AdamW::reset_moments() {
  m_.clear();
  v_.clear();
  steps_ = 0;
}

void AdamW::step(ParameterSet& params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const auto& entry : params) {
      m_.emplace_back(entry.second.numel(), 0.0);
      v_.emplace_back(entry.second.numel(), 0.0);
    }
  }
  std::size_t index = 0;
  for (const auto& [name, tensor] : params) {
    require(m_[index].size() == tensor.numel(),
            "adamw: moment shape no longer matches parameter '" + name + "'");
    for (double g : tensor.grad) {
      if (!std::isfinite(g)) throw NumericError("adamw: non-finite gradient in parameter '" + name + "'");
    }
    ++index;
  }

  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  index = 0;
  for (auto& [name, tensor] : params) {
    auto& m = m_[index];
    auto& v = v_[index];
    const bool has_grad = tensor.has_grad();
    for (std::size_t i = 0; i < tensor.numel(); ++i) {
      const double g = has_grad ? tensor.grad[i] : 0.0;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      const double p = tensor.data[i];
      tensor.data[i] = p - config_.lr * (m_hat / (std::sqrt(v_hat) + config_.eps) +
                                         config_.weight_decay * p);
    }
    ++index;
  }
}

double gradient_norm(const ParameterSet& params) {
  double sq = 0.0;
  for (const auto& entry : params) {
    for (double g : entry.second.grad) sq += g * g;
  }
  return std::sqrt(sq);
}

ClassIndex ClassIndex::build(std::span<const int> labels, std::size_t num_classes,
                             const std::vector<bool>& head_classes) {
  require(head_classes.size() == num_classes, "class index: head flags do not match class count");
  ClassIndex index;
  index.samples_by_class.resize(num_classes);
  index.is_head = head_classes;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < num_classes,
            "class index: label out of range");
    index.samples_by_class[labels[i]].push_back(i);
    if (head_classes[labels[i]]) index.head_samples.push_back(i);
  }
  return index;
}

std::vector<BatchItem> sample_balanced_batch(const ClassIndex& index, std::size_t batch_size,
                                             Rng& rng, bool with_partners) {
  std::vector<std::size_t> populated;
  for (std::size_t c = 0; c < index.num_classes(); ++c) {
    if (!index.samples_by_class[c].empty()) populated.push_back(c);
  }
  if (populated.empty()) throw ConfigError("sampler: training set is empty");
  if (with_partners && index.head_samples.empty()) {
    throw ConfigError("sampler: no head class configured; mixing needs head-class partners");
  }
  std::vector<BatchItem> batch(batch_size);
  for (auto& item : batch) {
    const std::size_t c = populated[rng.index(populated.size())];
    const auto& members = index.samples_by_class[c];
    item.sample = members[rng.index(members.size())];
    item.label = static_cast<int>(c);
    if (with_partners && !index.is_head[c]) {
      item.partner = index.head_samples[rng.index(index.head_samples.size())];
    }
  }
  return batch;
}

std::vector<BatchItem> sample_instance_batch(const ClassIndex& index, std::size_t batch_size,
                                             Rng& rng, bool with_partners) {
  std::vector<std::pair<std::size_t, int>> all;
  for (std::size_t c = 0; c < index.num_classes(); ++c) {
    for (std::size_t s : index.samples_by_class[c]) all.emplace_back(s, static_cast<int>(c));
  }
  if (all.empty()) throw ConfigError("sampler: training set is empty");
  std::sort(all.begin(), all.end());
  std::vector<BatchItem> batch(batch_size);
  for (auto& item : batch) {
    const auto& [sample, label] = all[rng.index(all.size())];
    item.sample = sample;
    item.label = label;
    if (with_partners) item.partner = all[rng.index(all.size())].first;
  }
  return batch;
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::kCe:
      return "ce";
    case Variant::kCeResample:
      return "ce-resample";
    case Variant::kVanillaMixup:
      return "vanilla-mixup";
    case Variant::kPatchOnly:
      return "patch-only";
    case Variant::kSaliencyOnly:
      return "saliency-only";
    case Variant::kSpmix:
      return "spmix";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::kCe, Variant::kCeResample, Variant::kVanillaMixup, Variant::kPatchOnly,
                    Variant::kSaliencyOnly, Variant::kSpmix}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + name +
                    "' (expected ce, ce-resample, vanilla-mixup, patch-only, saliency-only, spmix)");
}

bool uses_contrastive_loss(Variant variant) {
  return variant != Variant::kCe && variant != Variant::kCeResample;
}

std::optional<MixStrategy> mix_strategy_for(Variant variant) {
  switch (variant) {
    case Variant::kVanillaMixup:
      return MixStrategy::kScalarBeta;
    case Variant::kPatchOnly:
      return MixStrategy::kRandomPatch;
    case Variant::kSaliencyOnly:
      return MixStrategy::kSaliencyGlobal;
    case Variant::kSpmix:
      return MixStrategy::kSaliencyPatch;
    default:
      return std::nullopt;
  }
}

struct Trainer::PreparedBatch {
  std::vector<int> labels;
  Tensor query_images;
  std::vector<std::size_t> query_partners;
  Tensor query_ratios;
  Tensor key_images;
  std::vector<std::size_t> key_partners;
  Tensor key_ratios;
  // Cross-entropy targets (B, K); one-hot unless labels are mixed.
  Tensor targets;
};

Trainer::Trainer(const EncoderConfig& encoder, const TrainConfig& config, const TrainingData& data,
                 std::uint64_t seed)
    : encoder_(encoder),
      config_(config),
      data_(data),
      optimizer_(config.optimizer),
      classifier_optimizer_(config.optimizer),
      rng_(Rng::mix(seed ^ 0x5eed0001ULL)) {
  encoder_.validate();
  config_.augmentation.validate();
  require(config_.batch_size >= 2, "train: batch size must be at least 2");
  require(config_.temperature > 0.0, "train: temperature must be positive");
  require(!data_.images.empty() && data_.images.size() == data_.labels.size(),
          "train: training images and labels are empty or misaligned");
  for (const auto& image : data_.images) {
    require(image.height == encoder_.input_size && image.width == encoder_.input_size &&
                image.channels == encoder_.channels,
            "train: training image does not match the encoder input size");
  }
  index_ = ClassIndex::build(data_.labels, data_.num_classes, data_.head_classes);
  config_.mix.ratio.grid = encoder_.grid;
  if (auto strategy = mix_strategy_for(config_.variant)) config_.mix.strategy = *strategy;

  pair_ = EncoderPair::create(encoder_, Rng::mix(seed), config_.key_momentum);
  if (!uses_contrastive_loss(config_.variant) ||
      config_.mixup_objective == MixupObjective::kCrossEntropy) {
    Rng init(Rng::mix(seed ^ 0xc1a55ULL));
    Tensor weight({encoder_.dim, data_.num_classes});
    const double stddev = std::sqrt(1.0 / static_cast<double>(encoder_.dim));
    for (double& v : weight.data) v = init.normal(0.0, stddev);
    weight.requires_grad = true;
    Tensor bias({data_.num_classes});
    bias.requires_grad = true;
    classifier_.add("classifier.weight", std::move(weight));
    classifier_.add("classifier.bias", std::move(bias));
  }
}

std::size_t Trainer::steps_per_epoch() const {
  if (config_.steps_per_epoch > 0) return config_.steps_per_epoch;
  return (data_.images.size() + config_.batch_size - 1) / config_.batch_size;
}

Trainer::PreparedBatch Trainer::prepare(Rng& rng) {
  const Variant variant = config_.variant;
  const bool contrastive = uses_contrastive_loss(variant) &&
                           config_.mixup_objective == MixupObjective::kContrastive;
  const bool mixing = mix_strategy_for(variant).has_value();
  const std::size_t k = data_.num_classes;
  const std::size_t grid = encoder_.grid;

  std::vector<BatchItem> items;
  if (variant == Variant::kCe) {
    items = sample_instance_batch(index_, config_.batch_size, rng, false);
  } else if (mixing && !contrastive) {
    items = sample_instance_batch(index_, config_.batch_size, rng, true);
  } else {
    items = sample_balanced_batch(index_, config_.batch_size, rng, mixing);
  }

  PreparedBatch batch;
  const std::size_t b = items.size();
  std::vector<ImageTensor> q_anchor, q_partner, k_anchor, k_partner;
  std::vector<PatchRatioGrid> q_grids, k_grids;
  batch.query_partners.resize(b);
  batch.key_partners.resize(b);
  batch.targets = Tensor({b, k});
  for (std::size_t i = 0; i < b; ++i) {
    const BatchItem& item = items[i];
    Rng item_rng = rng.fork();
    batch.labels.push_back(item.label);
    const ImageTensor& image = data_.images[item.sample];
    if (item.partner) {
      const ImageTensor& partner = data_.images[*item.partner];
      MixedPair pair = build_mixed_pair(image, partner, item.label, config_.augmentation,
                                        config_.mix, item_rng);
      batch.query_partners[i] = b + q_partner.size();
      batch.key_partners[i] = b + k_partner.size();
      q_anchor.push_back(std::move(pair.tail_view1));
      q_partner.push_back(std::move(pair.head_view1));
      k_anchor.push_back(std::move(pair.tail_view2));
      k_partner.push_back(std::move(pair.head_view2));
      q_grids.push_back(pair.ratio1);
      k_grids.push_back(pair.ratio2);
      if (contrastive) {
        batch.targets.data[i * k + item.label] = 1.0;
      } else {
        // Label mixing with the single ratio of a scalar mixup pair.
        const double lambda = pair.ratio1.ratios.front();
        batch.targets.data[i * k + item.label] += lambda;
        batch.targets.data[i * k + data_.labels[*item.partner]] += 1.0 - lambda;
      }
    } else {
      batch.query_partners[i] = i;
      batch.key_partners[i] = i;
      q_anchor.push_back(augment_view(image, config_.augmentation, item_rng));
      k_anchor.push_back(augment_view(image, config_.augmentation, item_rng));
      q_grids.push_back(PatchRatioGrid::constant(grid, 1.0));
      k_grids.push_back(PatchRatioGrid::constant(grid, 1.0));
      batch.targets.data[i * k + item.label] = 1.0;
    }
  }
  q_anchor.insert(q_anchor.end(), std::make_move_iterator(q_partner.begin()),
                  std::make_move_iterator(q_partner.end()));
  batch.query_images = images_to_batch(q_anchor);
  batch.query_ratios = ratio_tensor(q_grids);
  if (contrastive) {
    k_anchor.insert(k_anchor.end(), std::make_move_iterator(k_partner.begin()),
                    std::make_move_iterator(k_partner.end()));
    batch.key_images = images_to_batch(k_anchor);
    batch.key_ratios = ratio_tensor(k_grids);
  }
  return batch;
}

StepStats Trainer::contrastive_step(const PreparedBatch& batch) {
  pair_.query.zero_grad();
  Graph graph;
  BoundParameters params(graph, pair_.query);
  Var features =
      encode_mixed(params, encoder_, batch.query_images, batch.query_partners, batch.query_ratios);
  Var query = project_normalize(params, encoder_, features);
  const Tensor key =
      key_forward(pair_.key, encoder_, batch.key_images, batch.key_partners, batch.key_ratios);
  Var loss = scl_loss(query, key, batch.labels, config_.temperature);
  StepStats stats;
  stats.loss = loss.value().item();
  if (!std::isfinite(stats.loss)) {
    throw NumericError("train: non-finite SCL loss at optimizer step " +
                       std::to_string(optimizer_.steps() + 1));
  }
  graph.backward(loss);
  stats.grad_norm = gradient_norm(pair_.query);
  optimizer_.step(pair_.query);
  pair_.momentum_update();
  return stats;
}

StepStats Trainer::cross_entropy_step(const PreparedBatch& batch) {
  pair_.query.zero_grad();
  classifier_.zero_grad();
  Graph graph;
  BoundParameters params(graph, pair_.query);
  BoundParameters head(graph, classifier_);
  Var features =
      encode_mixed(params, encoder_, batch.query_images, batch.query_partners, batch.query_ratios);
  Var logits = add(matmul(features, head["classifier.weight"]), head["classifier.bias"]);
  Var loss = cross_entropy_soft(logits, batch.targets);
  StepStats stats;
  stats.loss = loss.value().item();
  if (!std::isfinite(stats.loss)) {
    throw NumericError("train: non-finite cross-entropy loss at optimizer step " +
                       std::to_string(optimizer_.steps() + 1));
  }
  graph.backward(loss);
  const double q = gradient_norm(pair_.query);
  const double c = gradient_norm(classifier_);
  stats.grad_norm = std::sqrt(q * q + c * c);
  optimizer_.step(pair_.query);
  classifier_optimizer_.step(classifier_);
  pair_.momentum_update();
  return stats;
}

StepStats Trainer::step() {
  Rng batch_rng = rng_.fork();
  const PreparedBatch batch = prepare(batch_rng);
  const bool contrastive = uses_contrastive_loss(config_.variant) &&
                           config_.mixup_objective == MixupObjective::kContrastive;
  return contrastive ? contrastive_step(batch) : cross_entropy_step(batch);
}

EpochMetrics Trainer::train_epoch() {
  const auto start = std::chrono::steady_clock::now();
  EpochMetrics metrics;
  metrics.epoch = ++epochs_done_;
  const std::size_t steps = steps_per_epoch();
  for (std::size_t s = 0; s < steps; ++s) {
    const StepStats stats = step();
    metrics.loss += stats.loss;
    metrics.grad_norm += stats.grad_norm;
  }
  metrics.loss /= static_cast<double>(steps);
  metrics.grad_norm /= static_cast<double>(steps);
  metrics.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return metrics;
}

}  // namespace spmix
