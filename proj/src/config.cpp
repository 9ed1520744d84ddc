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


#include "spmix/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "spmix/error.hpp"

namespace spmix {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), v);
  if (result.ec != std::errc() || result.ptr != text.data() + text.size()) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || result.ec != std::errc() || result.ptr != text.data() + text.size()) {
    throw ConfigError("config: '" + key + "' expects a nonnegative integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + text + "'");
}

struct Field {
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <typename Member>
Field size_field(std::string doc, Member member) {
  return {std::move(doc),
          [member](const RunConfig& c) { return std::to_string(member(c)); },
          [member](RunConfig& c, const std::string& key, const std::string& v) {
            member(c) = static_cast<std::size_t>(parse_u64(key, v));
          }};
}

template <typename Member>
Field double_field(std::string doc, Member member) {
  return {std::move(doc),
          [member](const RunConfig& c) { return format_double(member(c)); },
          [member](RunConfig& c, const std::string& key, const std::string& v) {
            member(c) = parse_double(key, v);
          }};
}

template <typename Member>
Field bool_field(std::string doc, Member member) {
  return {std::move(doc),
          [member](const RunConfig& c) {
            return std::string(member(c) ? "true" : "false");
          },
          [member](RunConfig& c, const std::string& key, const std::string& v) {
            member(c) = parse_bool(key, v);
          }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["seed"] = {"Master random seed.",
                 [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.seed = parse_u64(k, v);
                 }};
    t["deterministic"] = bool_field("Omit wall-clock times from written logs.",
                                    [](auto& c) -> auto& { return c.deterministic; });

    t["encoder.input_size"] = size_field("Square input side in pixels; images are resized to it.",
                                         [](auto& c) -> auto& { return c.encoder.input_size; });
    t["encoder.channels"] = size_field("Input channels (1 or 3).",
                                       [](auto& c) -> auto& { return c.encoder.channels; });
    t["encoder.grid"] = size_field("Token grid side G; also the mixing ratio grid.",
                                   [](auto& c) -> auto& { return c.encoder.grid; });
    t["encoder.dim"] = size_field("Token width D.", [](auto& c) -> auto& { return c.encoder.dim; });
    t["encoder.depth"] = size_field("Transformer blocks.",
                                    [](auto& c) -> auto& { return c.encoder.depth; });
    t["encoder.heads"] = size_field("Attention heads; must divide D.",
                                    [](auto& c) -> auto& { return c.encoder.heads; });
    t["encoder.mlp_ratio"] = size_field("MLP hidden width as a multiple of D.",
                                        [](auto& c) -> auto& { return c.encoder.mlp_ratio; });
    t["encoder.projection_dim"] = size_field(
        "Contrastive embedding width.", [](auto& c) -> auto& { return c.encoder.projection_dim; });
    t["encoder.stem_channels1"] = size_field(
        "Channels of the first stem conv.", [](auto& c) -> auto& { return c.encoder.stem_channels1; });
    t["encoder.stem_channels2"] = size_field(
        "Channels of the second stem conv.", [](auto& c) -> auto& { return c.encoder.stem_channels2; });
    t["encoder.stem"] = {"conv (two strided convs + patchify) or patchify.",
                         [](const RunConfig& c) {
                           return std::string(c.encoder.stem == StemKind::kConv ? "conv" : "patchify");
                         },
                         [](RunConfig& c, const std::string& k, const std::string& v) {
                           if (v == "conv") {
                             c.encoder.stem = StemKind::kConv;
                           } else if (v == "patchify") {
                             c.encoder.stem = StemKind::kPatchify;
                           } else {
                             throw ConfigError("config: '" + k + "' expects conv or patchify");
                           }
                         }};
    t["encoder.positional_embedding"] =
        bool_field("Learned positional embedding on tokens.",
                   [](auto& c) -> auto& { return c.encoder.positional_embedding; });

    t["saliency.windows"] = {
        "Comma-separated odd box window sizes.",
        [](const RunConfig& c) {
          std::string out;
          for (int w : c.train.mix.ratio.windows) out += (out.empty() ? "" : ",") + std::to_string(w);
          return out;
        },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          std::vector<int> windows;
          std::stringstream in(v);
          std::string item;
          while (std::getline(in, item, ',')) {
            windows.push_back(static_cast<int>(parse_u64(k, trim(item))));
          }
          if (windows.empty()) throw ConfigError("config: '" + k + "' needs at least one window");
          c.train.mix.ratio.windows = windows;
        }};
    t["saliency.alpha"] = double_field("Upper clip on mixing ratios, in (0, 1].",
                                       [](auto& c) -> auto& { return c.train.mix.ratio.alpha; });
    t["saliency.noise"] = double_field("Amplitude of uniform noise added before normalization.",
                                       [](auto& c) -> auto& { return c.train.mix.ratio.noise; });
    t["saliency.order"] = {"clip-first or average-first.",
                           [](const RunConfig& c) {
                             return std::string(c.train.mix.ratio.order == RatioOrder::kClipFirst
                                                    ? "clip-first"
                                                    : "average-first");
                           },
                           [](RunConfig& c, const std::string& k, const std::string& v) {
                             if (v == "clip-first") {
                               c.train.mix.ratio.order = RatioOrder::kClipFirst;
                             } else if (v == "average-first") {
                               c.train.mix.ratio.order = RatioOrder::kAverageFirst;
                             } else {
                               throw ConfigError("config: '" + k +
                                                 "' expects clip-first or average-first");
                             }
                           }};
    t["mix.beta"] = double_field("Beta(a, a) parameter of vanilla mixup.",
                                 [](auto& c) -> auto& { return c.train.mix.beta; });

    t["augment.crop_min"] = double_field(
        "Smallest kept area fraction of the random crop.",
        [](auto& c) -> auto& { return c.train.augmentation.crop_scale_min; });
    t["augment.crop_max"] = double_field(
        "Largest kept area fraction of the random crop.",
        [](auto& c) -> auto& { return c.train.augmentation.crop_scale_max; });
    t["augment.flip"] = double_field(
        "Horizontal flip probability.",
        [](auto& c) -> auto& { return c.train.augmentation.flip_probability; });
    t["augment.jitter"] = double_field("Brightness/contrast jitter strength.",
                                       [](auto& c) -> auto& { return c.train.augmentation.jitter; });

    t["train.variant"] = {"ce, ce-resample, vanilla-mixup, patch-only, saliency-only or spmix.",
                          [](const RunConfig& c) { return to_string(c.train.variant); },
                          [](RunConfig& c, const std::string&, const std::string& v) {
                            c.train.variant = parse_variant(v);
                          }};
    t["train.epochs"] = size_field("Training epochs.", [](auto& c) -> auto& { return c.train.epochs; });
    t["train.batch_size"] = size_field("Samples per step.",
                                       [](auto& c) -> auto& { return c.train.batch_size; });
    t["train.steps_per_epoch"] = size_field(
        "Steps per epoch; 0 means ceil(train size / batch size).",
        [](auto& c) -> auto& { return c.train.steps_per_epoch; });
    t["train.temperature"] = double_field("Contrastive temperature.",
                                          [](auto& c) -> auto& { return c.train.temperature; });
    t["train.key_momentum"] = double_field("Key encoder momentum m.",
                                           [](auto& c) -> auto& { return c.train.key_momentum; });
    t["train.mixup_objective"] = {
        "Vanilla mixup loss: contrastive or cross-entropy (mixed labels).",
        [](const RunConfig& c) {
          return std::string(c.train.mixup_objective == MixupObjective::kContrastive ? "contrastive"
                                                                                    : "cross-entropy");
        },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "contrastive") {
            c.train.mixup_objective = MixupObjective::kContrastive;
          } else if (v == "cross-entropy") {
            c.train.mixup_objective = MixupObjective::kCrossEntropy;
          } else {
            throw ConfigError("config: '" + k + "' expects contrastive or cross-entropy");
          }
        }};

    t["optim.lr"] = double_field("AdamW learning rate.",
                                 [](auto& c) -> auto& { return c.train.optimizer.lr; });
    t["optim.beta1"] = double_field("AdamW first-moment decay.",
                                    [](auto& c) -> auto& { return c.train.optimizer.beta1; });
    t["optim.beta2"] = double_field("AdamW second-moment decay.",
                                    [](auto& c) -> auto& { return c.train.optimizer.beta2; });
    t["optim.weight_decay"] = double_field(
        "Decoupled weight decay.", [](auto& c) -> auto& { return c.train.optimizer.weight_decay; });
    t["optim.eps"] = double_field("AdamW epsilon.",
                                  [](auto& c) -> auto& { return c.train.optimizer.eps; });

    t["probe.epochs"] = size_field("Linear probe epochs.",
                                   [](auto& c) -> auto& { return c.probe.epochs; });
    t["probe.batch_size"] = size_field("Linear probe batch size.",
                                       [](auto& c) -> auto& { return c.probe.batch_size; });
    t["probe.lr"] = double_field("Linear probe learning rate.",
                                 [](auto& c) -> auto& { return c.probe.lr; });
    t["probe.weight_decay"] = double_field("Linear probe weight decay.",
                                           [](auto& c) -> auto& { return c.probe.weight_decay; });

    t["subsets.many_min"] = size_field("Training count at or above which a class is Many (head).",
                                       [](auto& c) -> auto& { return c.subsets.many_min; });
    t["subsets.few_max"] = size_field("Training count at or below which a class is Few.",
                                      [](auto& c) -> auto& { return c.subsets.few_max; });
    return t;
  }();
  return table;
}

const Field& field(const std::string& key) {
  const auto& table = fields();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
  return it->second;
}

}  // namespace

TrainConfig RunConfig::resolved_train() const {
  TrainConfig t = train;
  t.mix.ratio.grid = encoder.grid;
  if (auto strategy = mix_strategy_for(t.variant)) t.mix.strategy = *strategy;
  return t;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  field(key).set(*this, key, trim(value));
}

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& entry : fields()) out.push_back(entry.first);
  return out;
}

std::string RunConfig::describe(const std::string& key) { return field(key).doc; }

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [key, f] : fields()) {
    out += "# " + f.doc + "\n" + key + " = " + f.get(*this) + "\n";
  }
  return out;
}

void RunConfig::validate() const {
  encoder.validate();
  train.augmentation.validate();
  const auto& r = train.mix.ratio;
  if (!(r.alpha > 0.0 && r.alpha <= 1.0)) throw ConfigError("config: saliency.alpha must be in (0, 1]");
  if (r.noise < 0.0) throw ConfigError("config: saliency.noise must be nonnegative");
  for (int w : r.windows) {
    if (w < 3 || w % 2 == 0) throw ConfigError("config: saliency windows must be odd and >= 3");
  }
  if (train.batch_size < 2) throw ConfigError("config: train.batch_size must be at least 2");
  if (train.temperature <= 0.0) throw ConfigError("config: train.temperature must be positive");
  if (train.key_momentum < 0.0 || train.key_momentum > 1.0) {
    throw ConfigError("config: train.key_momentum must be in [0, 1]");
  }
  if (train.mix.beta <= 0.0) throw ConfigError("config: mix.beta must be positive");
  if (probe.batch_size == 0) throw ConfigError("config: probe.batch_size must be positive");
  if (subsets.many_min <= subsets.few_max) {
    throw ConfigError("config: subsets.many_min must exceed subsets.few_max");
  }
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ContractViolation& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  apply_config_text(config, buffer.str(), path.string());
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << config.to_text();
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace spmix
