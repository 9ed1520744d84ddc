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


#include "spmix/experiment.hpp"

#include <algorithm>
#include <cstdio>

#include "spmix/error.hpp"
#include "spmix/mixup.hpp"

namespace spmix {

ExperimentData make_experiment_data(std::vector<std::string> class_names,
                                    std::vector<ImageTensor> train_images,
                                    std::vector<int> train_labels,
                                    std::vector<ImageTensor> test_images,
                                    std::vector<int> test_labels, SubsetThresholds thresholds) {
  ExperimentData data;
  const std::size_t k = class_names.size();
  std::vector<std::size_t> counts(k, 0);
  for (int label : train_labels) {
    require(label >= 0 && static_cast<std::size_t>(label) < k, "experiment: label out of range");
    ++counts[label];
  }
  data.partition = partition_subsets(counts, thresholds);
  data.class_names = std::move(class_names);
  data.train.images = std::move(train_images);
  data.train.labels = std::move(train_labels);
  data.train.num_classes = k;
  data.train.head_classes = data.partition.head_mask();
  data.test_images = std::move(test_images);
  data.test_labels = std::move(test_labels);
  return data;
}

std::string format_epoch_line(const EpochMetrics& metrics, bool with_time) {
  char line[128];
  if (with_time) {
    std::snprintf(line, sizeof(line), "%zu %.9f %.9f %.3f\n", metrics.epoch, metrics.loss,
                  metrics.grad_norm, metrics.seconds);
  } else {
    std::snprintf(line, sizeof(line), "%zu %.9f %.9f -\n", metrics.epoch, metrics.loss,
                  metrics.grad_norm);
  }
  return line;
}

RunResult run_variant(const RunConfig& config, Variant variant, std::uint64_t seed,
                      const ExperimentData& data, const Logger& log) {
  RunConfig local = config;
  local.train.variant = variant;
  local.validate();
  RunResult result;
  result.variant = variant;
  result.seed = seed;

  Trainer trainer(local.encoder, local.resolved_train(), data.train, seed);
  for (std::size_t e = 0; e < local.train.epochs; ++e) {
    result.epochs.push_back(trainer.train_epoch());
    if (log) {
      log(to_string(variant) + " seed " + std::to_string(seed) + " epoch " +
          format_epoch_line(result.epochs.back(), true));
    }
  }

  ParameterSet& encoder = trainer.encoders().query;
  const Tensor train_features = extract_features(encoder, local.encoder, data.train.images);
  ProbeConfig probe_config = local.probe;
  probe_config.seed = Rng::mix(seed ^ 0x7e57ULL);
  ProbeResult probe = train_linear_probe(train_features, data.train.labels,
                                         data.train.num_classes, probe_config);
  result.probe_losses = probe.epoch_losses;
  const Tensor test_features = extract_features(encoder, local.encoder, data.test_images);
  const auto predicted = predict(probe.probe, test_features);
  result.report = evaluate(data.test_labels, predicted, data.train.num_classes, data.partition);
  return result;
}

double median(std::vector<double> values) {
  require(!values.empty(), "median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

std::optional<double> optional_median(const std::vector<std::optional<double>>& values) {
  std::vector<double> present;
  for (const auto& v : values) {
    if (!v) return std::nullopt;
    present.push_back(*v);
  }
  return median(present);
}

std::string percent(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
  return buf;
}

}  // namespace

std::vector<MedianMetrics> median_by_variant(const std::vector<RunResult>& runs) {
  std::vector<Variant> order;
  for (const auto& r : runs) {
    if (std::find(order.begin(), order.end(), r.variant) == order.end()) order.push_back(r.variant);
  }
  std::vector<MedianMetrics> out;
  for (Variant v : order) {
    std::vector<std::optional<double>> many, medium, few;
    std::vector<double> total, f1;
    for (const auto& r : runs) {
      if (r.variant != v) continue;
      many.push_back(r.report.many);
      medium.push_back(r.report.medium);
      few.push_back(r.report.few);
      total.push_back(r.report.total);
      f1.push_back(r.report.macro_f1);
    }
    out.push_back({v, total.size(), optional_median(many), optional_median(medium),
                   optional_median(few), median(total), median(f1)});
  }
  return out;
}

std::string format_runs_table(const std::vector<RunResult>& runs) {
  std::string out = "variant        seed        Many    Medium  Few     Total   F1\n";
  char line[160];
  for (const auto& r : runs) {
    std::snprintf(line, sizeof(line), "%-15s%-12llu%-8s%-8s%-8s%-8s%s\n", to_string(r.variant).c_str(),
                  static_cast<unsigned long long>(r.seed), percent(r.report.many).c_str(),
                  percent(r.report.medium).c_str(), percent(r.report.few).c_str(),
                  percent(r.report.total).c_str(), percent(r.report.macro_f1).c_str());
    out += line;
  }
  for (const auto& m : median_by_variant(runs)) {
    std::snprintf(line, sizeof(line), "%-15s%-12s%-8s%-8s%-8s%-8s%s\n", to_string(m.variant).c_str(),
                  "median", percent(m.many).c_str(), percent(m.medium).c_str(),
                  percent(m.few).c_str(), percent(m.total).c_str(), percent(m.macro_f1).c_str());
    out += line;
  }
  return out;
}

std::string format_ablation_grid(const std::vector<RunResult>& runs) {
  const auto medians = median_by_variant(runs);
  struct Row {
    Variant variant;
    bool patch, saliency;
  };
  const Row rows[] = {{Variant::kVanillaMixup, false, false},
                      {Variant::kPatchOnly, true, false},
                      {Variant::kSaliencyOnly, false, true},
                      {Variant::kSpmix, true, true}};
  std::string out = "patch  saliency  Acc     F1\n";
  char line[96];
  for (const Row& row : rows) {
    std::optional<double> acc, f1;
    for (const auto& m : medians) {
      if (m.variant == row.variant) {
        acc = m.total;
        f1 = m.macro_f1;
      }
    }
    std::snprintf(line, sizeof(line), "%-7s%-10s%-8s%s\n", row.patch ? "yes" : "no",
                  row.saliency ? "yes" : "no", percent(acc).c_str(), percent(f1).c_str());
    out += line;
  }
  return out;
}

ImageTensor hstack(const std::vector<ImageTensor>& images) {
  require(!images.empty(), "hstack: no images");
  std::size_t width = 0;
  for (const auto& image : images) {
    require(image.height == images[0].height && image.channels == images[0].channels,
            "hstack: images differ in height or channels");
    width += image.width;
  }
  ImageTensor out(images[0].height, width, images[0].channels);
  std::size_t x0 = 0;
  for (const auto& image : images) {
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < image.width; ++x) {
        for (std::size_t c = 0; c < image.channels; ++c) out.at(y, x0 + x, c) = image.at(y, x, c);
      }
    }
    x0 += image.width;
  }
  return out;
}

Manifest materialize_mixed(const RunConfig& config, const TrainingData& data,
                           const std::vector<std::string>& class_names, std::size_t count,
                           const std::filesystem::path& dir) {
  require(class_names.size() == data.num_classes, "materialize: class names do not match data");
  const TrainConfig train = config.resolved_train();
  const ClassIndex index = ClassIndex::build(data.labels, data.num_classes, data.head_classes);
  Rng rng(Rng::mix(config.seed ^ 0x3a7e11aULL));
  std::filesystem::create_directories(dir / "mixed");
  std::filesystem::create_directories(dir / "panels");
  Manifest manifest;
  manifest.root = dir;
  while (manifest.records.size() < count) {
    for (const BatchItem& item : sample_balanced_batch(index, train.batch_size, rng, true)) {
      if (!item.partner || manifest.records.size() >= count) continue;
      Rng item_rng = rng.fork();
      const MixedPair pair = build_mixed_pair(data.images[item.sample], data.images[*item.partner],
                                              item.label, train.augmentation, train.mix, item_rng);
      const ImageTensor mixed = mix_images(pair.tail_view1, pair.head_view1, pair.ratio1);
      char name[32];
      std::snprintf(name, sizeof(name), "%05zu.png", manifest.records.size());
      save_image(mixed, dir / "mixed" / name);
      save_image(hstack({pair.tail_view1, pair.head_view1, mixed}), dir / "panels" / name);
      manifest.records.push_back({std::string("mixed/") + name, class_names[item.label]});
    }
  }
  save_manifest(manifest, dir / "manifest.tsv");
  return manifest;
}

}  // namespace spmix
