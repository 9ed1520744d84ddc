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


#include "spmix/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "spmix/error.hpp"
#include "spmix/training.hpp"

namespace spmix {

Tensor extract_features(ParameterSet& encoder, const EncoderConfig& config,
                        std::span<const ImageTensor> images, std::size_t batch_size) {
  require(batch_size > 0, "extract_features: batch size must be positive");
  Tensor features({images.size(), config.dim});
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, images.size() - start);
    GraphOptions options;
    options.no_grad = true;
    Graph graph(options);
    BoundParameters params(graph, encoder);
    const Var pooled = encode(params, config, images_to_batch(images.subspan(start, count)));
    std::copy(pooled.value().data.begin(), pooled.value().data.end(),
              features.data.begin() + static_cast<std::ptrdiff_t>(start * config.dim));
  }
  return features;
}

ParameterSet LinearProbe::to_parameters() const {
  ParameterSet params;
  params.add("probe.weight", weight);
  params.add("probe.bias", bias);
  params.add("probe.mean", mean);
  params.add("probe.scale", scale);
  return params;
}

LinearProbe LinearProbe::from_parameters(const ParameterSet& params) {
  for (const char* name : {"probe.weight", "probe.bias", "probe.mean", "probe.scale"}) {
    if (!params.contains(name)) throw FormatError(std::string("probe checkpoint lacks ") + name);
  }
  LinearProbe probe{params.get("probe.weight"), params.get("probe.bias"),
                    params.get("probe.mean"), params.get("probe.scale")};
  if (probe.weight.rank() != 2 || probe.bias.shape != Shape{probe.classes()} ||
      probe.mean.shape != Shape{probe.dim()} || probe.scale.shape != Shape{probe.dim()}) {
    throw FormatError("probe checkpoint has inconsistent shapes");
  }
  return probe;
}

namespace {

Tensor standardize(const LinearProbe& probe, const Tensor& features) {
  require(features.rank() == 2 && features.dim(1) == probe.dim(),
          "probe: features " + shape_string(features.shape) + " do not match probe input " +
              std::to_string(probe.dim()));
  Tensor out = features;
  const std::size_t d = probe.dim();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out.data[i] = (out.data[i] - probe.mean.data[i % d]) * probe.scale.data[i % d];
  }
  return out;
}

}  // namespace

ProbeResult train_linear_probe(const Tensor& features, std::span<const int> labels,
                               std::size_t num_classes, const ProbeConfig& config) {
  require(features.rank() == 2 && features.dim(0) == labels.size() && !labels.empty(),
          "probe: features " + shape_string(features.shape) + " do not match " +
              std::to_string(labels.size()) + " labels");
  require(num_classes >= 1 && config.batch_size > 0, "probe: invalid configuration");
  const std::size_t n = features.dim(0), d = features.dim(1);

  ProbeResult result;
  LinearProbe& probe = result.probe;
  probe.weight = Tensor({d, num_classes});
  probe.bias = Tensor({num_classes});
  probe.mean = Tensor({d});
  probe.scale = Tensor({d});
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += features.data[i * d + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = features.data[i * d + j] - mean;
      var += diff * diff;
    }
    var /= static_cast<double>(n);
    probe.mean.data[j] = mean;
    probe.scale.data[j] = 1.0 / std::sqrt(var + 1e-12);
  }
  const Tensor x = standardize(probe, features);

  ParameterSet params;
  params.add("weight", probe.weight).requires_grad = true;
  params.add("bias", probe.bias).requires_grad = true;
  AdamW optimizer(AdamWConfig{.lr = config.lr, .weight_decay = config.weight_decay});
  const ClassIndex index =
      ClassIndex::build(labels, num_classes, std::vector<bool>(num_classes, false));
  Rng rng(Rng::mix(config.seed ^ 0x9b0beULL));
  const std::size_t steps = (n + config.batch_size - 1) / config.batch_size;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      const auto batch = sample_balanced_batch(index, config.batch_size, rng, false);
      Tensor xb({batch.size(), d});
      std::vector<int> yb;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(batch[i].sample * d), d,
                    xb.data.begin() + static_cast<std::ptrdiff_t>(i * d));
        yb.push_back(batch[i].label);
      }
      params.zero_grad();
      Graph graph;
      const Var logits = add(matmul(graph.constant(std::move(xb)), graph.parameter(params.get("weight"))),
                             graph.parameter(params.get("bias")));
      const Var loss = cross_entropy(logits, yb);
      total += loss.value().item();
      graph.backward(loss);
      optimizer.step(params);
    }
    result.epoch_losses.push_back(total / static_cast<double>(steps));
  }
  probe.weight = params.get("weight");
  probe.bias = params.get("bias");
  probe.weight.requires_grad = probe.bias.requires_grad = false;
  probe.weight.clear_grad();
  probe.bias.clear_grad();
  return result;
}

Tensor probe_logits(const LinearProbe& probe, const Tensor& features) {
  const Tensor x = standardize(probe, features);
  const std::size_t n = x.dim(0), k = probe.classes();
  Tensor logits({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) logits.data[i * k + c] = probe.bias.data[c];
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < probe.dim(); ++j) {
      const double v = x.data[i * probe.dim() + j];
      for (std::size_t c = 0; c < k; ++c) logits.data[i * k + c] += v * probe.weight.data[j * k + c];
    }
  }
  return logits;
}

std::vector<int> predict(const LinearProbe& probe, const Tensor& features) {
  const Tensor logits = probe_logits(probe, features);
  const std::size_t k = probe.classes();
  std::vector<int> out;
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (logits.data[i * k + c] > logits.data[i * k + best]) best = c;
    }
    out.push_back(static_cast<int>(best));
  }
  return out;
}

MetricsReport metrics_from_confusion(const std::vector<std::size_t>& confusion,
                                     std::size_t num_classes, const SubsetPartition& partition) {
  require(confusion.size() == num_classes * num_classes, "metrics: confusion matrix size mismatch");
  require(partition.subset_of.size() == num_classes, "metrics: partition does not cover all classes");
  MetricsReport report;
  report.num_classes = num_classes;
  report.confusion = confusion;
  const std::size_t k = num_classes;
  std::size_t correct = 0, all = 0;
  std::array<std::size_t, 3> subset_correct{}, subset_all{};
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t row = 0, column = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += confusion[c * k + j];
      column += confusion[j * k + c];
    }
    const double tp = static_cast<double>(confusion[c * k + c]);
    const double precision = column == 0 ? 0.0 : tp / static_cast<double>(column);
    const double recall = row == 0 ? 0.0 : tp / static_cast<double>(row);
    report.precision.push_back(precision);
    report.recall.push_back(recall);
    report.f1.push_back(precision + recall == 0.0 ? 0.0
                                                  : 2.0 * precision * recall / (precision + recall));
    correct += confusion[c * k + c];
    all += row;
    const auto s = static_cast<std::size_t>(partition.subset_of[c]);
    subset_correct[s] += confusion[c * k + c];
    subset_all[s] += row;
  }
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  report.many = ratio(subset_correct[0], subset_all[0]);
  report.medium = ratio(subset_correct[1], subset_all[1]);
  report.few = ratio(subset_correct[2], subset_all[2]);
  report.total = all == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(all);
  double f1_sum = 0.0;
  for (double f : report.f1) f1_sum += f;
  report.macro_f1 = k == 0 ? 0.0 : f1_sum / static_cast<double>(k);
  return report;
}

MetricsReport evaluate(std::span<const int> truth, std::span<const int> predicted,
                       std::size_t num_classes, const SubsetPartition& partition) {
  require(truth.size() == predicted.size(), "evaluate: prediction count does not match labels");
  std::vector<std::size_t> confusion(num_classes * num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] >= 0 && static_cast<std::size_t>(truth[i]) < num_classes &&
                predicted[i] >= 0 && static_cast<std::size_t>(predicted[i]) < num_classes,
            "evaluate: class id out of range");
    ++confusion[static_cast<std::size_t>(truth[i]) * num_classes +
                static_cast<std::size_t>(predicted[i])];
  }
  return metrics_from_confusion(confusion, num_classes, partition);
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string optional_fixed(const std::optional<double>& v, int digits) {
  return v ? fixed(*v, digits) : "n/a";
}

}  // namespace

std::string format_report_table(const MetricsReport& report,
                                const std::vector<std::string>& class_names) {
  std::string out;
  out += "Many    Medium  Few     Total   F1\n";
  char line[128];
  std::snprintf(line, sizeof(line), "%-8s%-8s%-8s%-8s%s\n",
                optional_fixed(report.many ? std::optional(*report.many * 100) : std::nullopt, 2).c_str(),
                optional_fixed(report.medium ? std::optional(*report.medium * 100) : std::nullopt, 2).c_str(),
                optional_fixed(report.few ? std::optional(*report.few * 100) : std::nullopt, 2).c_str(),
                fixed(report.total * 100, 2).c_str(), fixed(report.macro_f1 * 100, 2).c_str());
  out += line;
  out += "\nclass        precision recall  f1\n";
  for (std::size_t c = 0; c < report.num_classes; ++c) {
    const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
    std::snprintf(line, sizeof(line), "%-13s%-10s%-8s%s\n", name.c_str(),
                  fixed(report.precision[c], 4).c_str(), fixed(report.recall[c], 4).c_str(),
                  fixed(report.f1[c], 4).c_str());
    out += line;
  }
  out += "\nconfusion (rows = true class)\n";
  for (std::size_t t = 0; t < report.num_classes; ++t) {
    for (std::size_t p = 0; p < report.num_classes; ++p) {
      out += (p ? " " : "") + std::to_string(report.at(t, p));
    }
    out += "\n";
  }
  return out;
}

std::string format_report_kv(const MetricsReport& report,
                             const std::vector<std::string>& class_names) {
  std::string out;
  out += "acc.many=" + optional_fixed(report.many, 6) + "\n";
  out += "acc.medium=" + optional_fixed(report.medium, 6) + "\n";
  out += "acc.few=" + optional_fixed(report.few, 6) + "\n";
  out += "acc.total=" + fixed(report.total, 6) + "\n";
  out += "f1.macro=" + fixed(report.macro_f1, 6) + "\n";
  for (std::size_t c = 0; c < report.num_classes; ++c) {
    const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
    out += "f1." + name + "=" + fixed(report.f1[c], 6) + "\n";
  }
  for (std::size_t t = 0; t < report.num_classes; ++t) {
    out += "confusion." + std::to_string(t) + "=";
    for (std::size_t p = 0; p < report.num_classes; ++p) {
      out += (p ? "," : "") + std::to_string(report.at(t, p));
    }
    out += "\n";
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace spmix
