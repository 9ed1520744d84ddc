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


// spmix: command-line entry point for the training and evaluation pipeline.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spmix/config.hpp"
#include "spmix/dataset.hpp"
#include "spmix/error.hpp"
#include "spmix/eval.hpp"
#include "spmix/experiment.hpp"
#include "spmix/image.hpp"
#include "spmix/kernels.hpp"
#include "spmix/mixup.hpp"
#include "spmix/saliency.hpp"
#include "spmix/training.hpp"

namespace fs = std::filesystem;
using namespace spmix;

namespace {

void log_line(const std::string& line) { std::cerr << line << "\n"; }

void log_config(const std::string& command, const RunConfig& config) {
  log_line("spmix " + command + ": seed=" + std::to_string(config.seed) +
           " threads=" + std::to_string(kernels::thread_count()));
  std::istringstream in(config.to_text());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') log_line("  " + line);
  }
}

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("expected comma-separated integers, got '" + text + "'");
    }
  }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Class names with their training counts, written next to a trained encoder.
// Creates the parent directory of an output file and returns its path.
fs::path output_file(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  return path;
}

struct ClassTable {
  std::vector<std::string> names;
  std::vector<std::size_t> counts;
};

void save_class_table(const ClassTable& table, const fs::path& path) {
  std::string text;
  for (std::size_t i = 0; i < table.names.size(); ++i) {
    text += table.names[i] + "\t" + std::to_string(table.counts[i]) + "\n";
  }
  write_text(path, text);
}

ClassTable load_class_table(const fs::path& path) {
  ClassTable table;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError(path.string() + ": expected 'class<TAB>count'");
    table.names.push_back(line.substr(0, tab));
    table.counts.push_back(parse_counts(line.substr(tab + 1)).at(0));
  }
  if (table.names.empty()) throw FormatError(path.string() + ": no classes");
  return table;
}

/// Options shared by every command that resolves a RunConfig.
struct ConfigOptions {
  std::string file;
  std::vector<std::string> overrides;

  void add_to(CLI::App* app) {
    app->add_option("--config", file, "Run configuration file (key = value lines)");
    app->add_option("--set", overrides, "Override one key, as key=value (repeatable)");
  }

  // Defaults < --config file < --set < dedicated flags (applied by callers).
  RunConfig resolve(const fs::path& base = {}) const {
    RunConfig config;
    if (!base.empty()) apply_config_file(config, base);
    if (!file.empty()) apply_config_file(config, file);
    for (const auto& item : overrides) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + item + "'");
      config.set(item.substr(0, eq), item.substr(eq + 1));
    }
    return config;
  }
};

template <typename T>
void override_if(CLI::Option* option, RunConfig& config, const std::string& key, const T& value) {
  if (option->count() > 0) {
    std::ostringstream text;
    text << value;
    config.set(key, text.str());
  }
}

TrainingData training_data(const Manifest& manifest, const RunConfig& config, ClassTable* table) {
  TrainingData data;
  table->names = manifest.class_names();
  table->counts = manifest.class_counts();
  data.images = load_images(manifest, config.encoder.input_size, config.encoder.channels);
  data.labels = manifest.labels();
  data.num_classes = table->names.size();
  data.head_classes = partition_subsets(table->counts, config.subsets).head_mask();
  return data;
}

// --------------------------------------------------------------------------

struct SplitCommand {
  std::string manifest, out;
  std::uint64_t seed = 0;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("split", "Balanced val/test split of a manifest");
    app->add_option("--manifest", manifest, "Input manifest")->required();
    app->add_option("--out", out, "Output directory for train.tsv, val.tsv, test.tsv")->required();
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    app->callback([this] { run(); });
  }

  void run() {
    log_line("spmix split: seed=" + std::to_string(seed) + " manifest=" + manifest);
    const Manifest input = load_manifest(manifest);
    const DatasetSplit split = split_dataset(input, seed);
    const SplitSizes sizes = split_sizes(input.class_counts());
    save_manifest(split.train, fs::path(out) / "train.tsv");
    save_manifest(split.val, fs::path(out) / "val.tsv");
    save_manifest(split.test, fs::path(out) / "test.tsv");
    log_line("  per-class val=" + std::to_string(sizes.val) + " test=" + std::to_string(sizes.test) +
             " train=" + std::to_string(split.train.records.size()));
  }
};

struct GenerateCommand {
  std::string out, counts = "500,200,80,30,10";
  std::size_t size = 64;
  std::uint64_t seed = 0;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("gen-synthetic", "Write a synthetic long-tailed dataset");
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--counts", counts, "Images per class, comma separated")->capture_default_str();
    app->add_option("--size", size, "Image side in pixels")->capture_default_str();
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    app->callback([this] { run(); });
  }

  void run() {
    log_line("spmix gen-synthetic: seed=" + std::to_string(seed) + " counts=" + counts +
             " size=" + std::to_string(size));
    SyntheticConfig config;
    config.counts = parse_counts(counts);
    config.image_size = size;
    config.seed = seed;
    const Manifest manifest = write_synthetic(generate_synthetic(config), out);
    log_line("  wrote " + std::to_string(manifest.records.size()) + " images and " +
             (fs::path(out) / "manifest.tsv").string());
  }
};

struct SaliencyCommand {
  std::string in, partner, out, ratios_out, composite, windows = "9,25,49", order = "clip-first";
  double alpha = 0.8, noise = 0.0;
  std::size_t grid = 8, size = 0;
  std::uint64_t seed = 0;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("saliency", "Saliency map and patch mixing ratios");
    app->add_option("--in", in, "Input image (tail operand)")->required();
    app->add_option("--partner", partner, "Head partner image; maps are merged by max");
    app->add_option("--out", out, "Output PNG of the normalized map")->required();
    app->add_option("--ratios", ratios_out, "Also write the G x G ratio grid as text");
    app->add_option("--composite", composite,
                    "Also write inputs and map side by side (tail | head | map) as PNG");
    app->add_option("--windows", windows, "Box window sizes")->capture_default_str();
    app->add_option("--alpha", alpha, "Ratio clip threshold")->capture_default_str();
    app->add_option("--grid", grid, "Patch grid side G")->capture_default_str();
    app->add_option("--noise", noise, "Uniform noise amplitude before normalization")
        ->capture_default_str();
    app->add_option("--order", order, "clip-first or average-first")->capture_default_str();
    app->add_option("--size", size, "Resize inputs to size x size first (0 keeps)")
        ->capture_default_str();
    app->add_option("--seed", seed, "Random seed for the noise")->capture_default_str();
    app->callback([this] { run(); });
  }

  void run() {
    log_line("spmix saliency: seed=" + std::to_string(seed) + " windows=" + windows +
             " alpha=" + std::to_string(alpha) + " grid=" + std::to_string(grid) +
             " noise=" + std::to_string(noise));
    RatioPipelineConfig config;
    config.windows.clear();
    for (std::size_t w : parse_counts(windows)) config.windows.push_back(static_cast<int>(w));
    config.alpha = alpha;
    config.grid = grid;
    config.noise = noise;
    if (order == "clip-first") {
      config.order = RatioOrder::kClipFirst;
    } else if (order == "average-first") {
      config.order = RatioOrder::kAverageFirst;
    } else {
      throw ConfigError("--order expects clip-first or average-first");
    }
    const ImageTensor tail = load_image(in, size);
    const ImageTensor head = partner.empty() ? tail : load_image(partner, size);
    Rng rng(Rng::mix(seed));
    SaliencyMap merged;
    const PatchRatioGrid ratios = lesion_aware_ratios(tail, head, config, rng, &merged);
    save_saliency(merged, output_file(out));
    if (!composite.empty()) {
      save_image(hstack({convert_channels(tail, 3), convert_channels(head, 3),
                         convert_channels(saliency_to_image(merged), 3)}),
                 output_file(composite));
    }
    if (!ratios_out.empty()) {
      std::string text;
      char cell[32];
      for (std::size_t i = 0; i < ratios.grid; ++i) {
        for (std::size_t j = 0; j < ratios.grid; ++j) {
          std::snprintf(cell, sizeof(cell), "%s%.6f", j ? " " : "", ratios.at(i, j));
          text += cell;
        }
        text += "\n";
      }
      write_text(output_file(ratios_out), text);
    }
  }
};

struct AugmentCommand {
  ConfigOptions options;
  std::string in, manifest, out;
  std::size_t size = 0, count = 16;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand(
        "augment", "One augmented view of --in, or mixed samples drawn from --manifest");
    options.add_to(app);
    auto* in_opt = app->add_option("--in", in, "Input image: write one augmented view");
    auto* manifest_opt = app->add_option(
        "--manifest", manifest, "Training manifest: write mixed samples, panels and a manifest");
    in_opt->excludes(manifest_opt);
    app->add_option("--out", out, "Output PNG (--in) or directory (--manifest)")->required();
    app->add_option("--size", size, "Resize inputs to size x size (0 keeps; --manifest uses "
                                    "encoder.input_size)")
        ->capture_default_str();
    app->add_option("--count", count, "Mixed samples to write (--manifest)")->capture_default_str();
    seed_opt = app->add_option("--seed", seed, "Random seed (default 0)");
    app->callback([this] { run(); });
  }

  void run() {
    RunConfig config = options.resolve();
    override_if(seed_opt, config, "seed", seed);
    config.validate();
    if (!in.empty()) {
      log_line("spmix augment: seed=" + std::to_string(config.seed) + " in=" + in);
      Rng rng(Rng::mix(config.seed));
      save_image(augment_view(load_image(in, size), config.train.augmentation, rng), output_file(out));
      return;
    }
    if (manifest.empty()) throw ConfigError("augment needs --in or --manifest");
    log_config("augment", config);
    ClassTable table;
    const TrainingData data = training_data(load_manifest(manifest), config, &table);
    const Manifest written = materialize_mixed(config, data, table.names, count, out);
    log_line("  wrote " + std::to_string(written.records.size()) + " mixed samples to " + out);
  }
};

struct TrainCommand {
  ConfigOptions options;
  std::string train, out, variant;
  std::uint64_t seed = 0;
  std::size_t epochs = 0, grid = 0, materialize = 0;
  double alpha = 0.0, key_momentum = 0.0;
  CLI::Option *seed_opt = nullptr, *epochs_opt = nullptr, *alpha_opt = nullptr,
              *grid_opt = nullptr, *momentum_opt = nullptr, *variant_opt = nullptr;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("train", "Train the query/key encoders");
    options.add_to(app);
    app->add_option("--train", train, "Training manifest")->required();
    app->add_option("--out", out, "Checkpoint directory")->required();
    seed_opt = app->add_option("--seed", seed, "Random seed (default 0)");
    epochs_opt = app->add_option("--epochs", epochs, "Training epochs (default 30)");
    alpha_opt = app->add_option("--alpha", alpha, "Ratio clip threshold (default 0.8)");
    grid_opt = app->add_option("--grid", grid, "Token and ratio grid side G (default 8)");
    momentum_opt = app->add_option("--key-momentum", key_momentum, "Key encoder momentum (default 0.5)");
    variant_opt = app->add_option("--variant", variant,
                                  "ce, ce-resample, vanilla-mixup, patch-only, saliency-only, spmix "
                                  "(default spmix)");
    app->add_option("--materialize", materialize,
                    "Also write this many mixed training images to <out>/materialized");
    app->callback([this] { run(); });
  }

  void run() {
    RunConfig config = options.resolve();
    override_if(seed_opt, config, "seed", seed);
    override_if(epochs_opt, config, "train.epochs", epochs);
    override_if(alpha_opt, config, "saliency.alpha", alpha);
    override_if(grid_opt, config, "encoder.grid", grid);
    override_if(momentum_opt, config, "train.key_momentum", key_momentum);
    override_if(variant_opt, config, "train.variant", variant);
    config.validate();
    log_config("train", config);

    const fs::path dir(out);
    fs::create_directories(dir);
    save_run_config(config, dir / "run.cfg");
    ClassTable table;
    const TrainingData data = training_data(load_manifest(train), config, &table);
    save_class_table(table, dir / "classes.tsv");
    if (materialize > 0) {
      materialize_mixed(config, data, table.names, materialize, dir / "materialized");
    }

    Trainer trainer(config.encoder, config.resolved_train(), data, config.seed);
    std::ofstream log(dir / "train_log.txt", std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot write " + (dir / "train_log.txt").string());
    log << "# epoch loss grad_norm seconds\n";
    for (std::size_t e = 0; e < config.train.epochs; ++e) {
      const EpochMetrics metrics = trainer.train_epoch();
      log << format_epoch_line(metrics, !config.deterministic) << std::flush;
      std::cerr << "  epoch " << format_epoch_line(metrics, true);
    }
    save_checkpoint(trainer.encoders().query, dir / "encoder.spmx");
    save_checkpoint(trainer.encoders().key, dir / "key_encoder.spmx");
    if (trainer.classifier().size() > 0) save_checkpoint(trainer.classifier(), dir / "classifier.spmx");
  }
};

struct EncoderBundle {
  RunConfig config;
  ClassTable classes;
  ParameterSet encoder;
};

EncoderBundle load_encoder_dir(const fs::path& dir, const ConfigOptions& options) {
  const fs::path checkpoint = dir / "encoder.spmx";
  if (!fs::exists(checkpoint)) throw IoError("missing encoder checkpoint " + checkpoint.string());
  EncoderBundle bundle;
  bundle.config = options.resolve(dir / "run.cfg");
  bundle.classes = load_class_table(dir / "classes.tsv");
  bundle.encoder = load_checkpoint(checkpoint);
  const ParameterSet expected = init_encoder_params(bundle.config.encoder, 0);
  if (!bundle.encoder.aligned_with(expected)) {
    throw FormatError(checkpoint.string() + " does not match the encoder configuration in run.cfg");
  }
  return bundle;
}

struct ProbeCommand {
  ConfigOptions options;
  std::string encoder_dir, train, out;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  CLI::Option *epochs_opt = nullptr, *seed_opt = nullptr;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("probe", "Fit a linear probe on frozen encoder features");
    options.add_to(app);
    app->add_option("--encoder", encoder_dir, "Directory written by train")->required();
    app->add_option("--train", train, "Training manifest")->required();
    app->add_option("--out", out, "Probe checkpoint path")->required();
    epochs_opt = app->add_option("--epochs", epochs, "Probe epochs (default 40)");
    seed_opt = app->add_option("--seed", seed, "Random seed (default: the run's seed)");
    app->callback([this] { run(); });
  }

  void run() {
    EncoderBundle bundle = load_encoder_dir(encoder_dir, options);
    RunConfig& config = bundle.config;
    override_if(epochs_opt, config, "probe.epochs", epochs);
    override_if(seed_opt, config, "seed", seed);
    config.validate();
    log_config("probe", config);

    const Manifest manifest = load_manifest(train);
    const auto images = load_images(manifest, config.encoder.input_size, config.encoder.channels);
    const auto labels = manifest.labels(bundle.classes.names);
    const Tensor features = extract_features(bundle.encoder, config.encoder, images);
    ProbeConfig probe_config = config.probe;
    probe_config.seed = Rng::mix(config.seed ^ 0x7e57ULL);
    const ProbeResult result =
        train_linear_probe(features, labels, bundle.classes.names.size(), probe_config);
    save_checkpoint(result.probe.to_parameters(), output_file(out));
    std::string log = "# epoch loss\n";
    char line[64];
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
      std::snprintf(line, sizeof(line), "%zu %.9f\n", e + 1, result.epoch_losses[e]);
      log += line;
    }
    write_text(fs::path(out).replace_extension(".log"), log);
  }
};

struct EvalCommand {
  ConfigOptions options;
  std::string encoder_dir, probe, test, out;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("eval", "Evaluate encoder + probe on a test manifest");
    options.add_to(app);
    app->add_option("--encoder", encoder_dir, "Directory written by train")->required();
    app->add_option("--probe", probe, "Probe checkpoint")->required();
    app->add_option("--test", test, "Test manifest")->required();
    app->add_option("--out", out, "Output directory for metrics.txt and metrics.kv")->required();
    app->callback([this] { run(); });
  }

  void run() {
    EncoderBundle bundle = load_encoder_dir(encoder_dir, options);
    bundle.config.validate();
    log_config("eval", bundle.config);
    if (!fs::exists(probe)) throw IoError("missing probe checkpoint " + probe);
    const LinearProbe linear = LinearProbe::from_parameters(load_checkpoint(probe));
    const Manifest manifest = load_manifest(test);
    const auto images =
        load_images(manifest, bundle.config.encoder.input_size, bundle.config.encoder.channels);
    const auto labels = manifest.labels(bundle.classes.names);
    const Tensor features = extract_features(bundle.encoder, bundle.config.encoder, images);
    const auto predicted = predict(linear, features);
    const SubsetPartition partition = partition_subsets(bundle.classes.counts, bundle.config.subsets);
    const MetricsReport report =
        evaluate(labels, predicted, bundle.classes.names.size(), partition);
    write_text(output_file(fs::path(out) / "metrics.txt"), format_report_table(report, bundle.classes.names));
    write_text(output_file(fs::path(out) / "metrics.kv"), format_report_kv(report, bundle.classes.names));
    log_line("  total=" + std::to_string(report.total) + " macro_f1=" + std::to_string(report.macro_f1));
  }
};

struct AblateCommand {
  ConfigOptions options;
  std::string train, test, out, variants = "vanilla-mixup,patch-only,saliency-only,spmix";
  std::size_t seeds = 3, epochs = 0;
  std::uint64_t seed = 0;
  CLI::Option *epochs_opt = nullptr, *seed_opt = nullptr;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("ablate", "Train, probe and evaluate several variants and seeds");
    options.add_to(app);
    app->add_option("--train", train, "Training manifest")->required();
    app->add_option("--test", test, "Test manifest")->required();
    app->add_option("--out", out, "Output directory for runs.txt, ablation.txt")->required();
    app->add_option("--variants", variants, "Comma-separated variants")->capture_default_str();
    app->add_option("--seeds", seeds, "Number of seeds, counting up from --seed")->capture_default_str();
    seed_opt = app->add_option("--seed", seed, "First seed (default 0)");
    epochs_opt = app->add_option("--epochs", epochs, "Training epochs (default 30)");
    app->callback([this] { run(); });
  }

  void run() {
    RunConfig config = options.resolve();
    override_if(seed_opt, config, "seed", seed);
    override_if(epochs_opt, config, "train.epochs", epochs);
    config.validate();
    log_config("ablate", config);
    if (seeds == 0) throw ConfigError("--seeds must be at least 1");
    std::vector<Variant> list;
    for (const auto& name : split_list(variants)) list.push_back(parse_variant(name));
    if (list.empty()) throw ConfigError("--variants is empty");

    const Manifest train_manifest = load_manifest(train);
    const Manifest test_manifest = load_manifest(test);
    const auto names = train_manifest.class_names();
    ExperimentData data = make_experiment_data(
        names, load_images(train_manifest, config.encoder.input_size, config.encoder.channels),
        train_manifest.labels(),
        load_images(test_manifest, config.encoder.input_size, config.encoder.channels),
        test_manifest.labels(names), config.subsets);

    std::vector<RunResult> runs;
    for (Variant v : list) {
      for (std::size_t s = 0; s < seeds; ++s) {
        runs.push_back(run_variant(config, v, config.seed + s, data,
                                   [](const std::string& line) { std::cerr << "  " << line; }));
      }
    }
    write_text(output_file(fs::path(out) / "runs.txt"), format_runs_table(runs));
    write_text(output_file(fs::path(out) / "ablation.txt"), format_ablation_grid(runs));
    std::cerr << format_runs_table(runs);
  }
};

struct ImportIsicCommand {
  std::string csv, images, out;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand(
        "import-isic", "Convert a one-hot ground-truth CSV (image,<class>...) into a manifest");
    app->add_option("--csv", csv, "Ground-truth CSV with a header row")->required();
    app->add_option("--images", images, "Directory holding <image>.jpg files")->required();
    app->add_option("--out", out, "Manifest to write")->required();
    app->callback([this] { run(); });
  }

  void run() {
    log_line("spmix import-isic: csv=" + csv);
    std::istringstream in(read_file(csv));
    std::string line;
    if (!std::getline(in, line)) throw FormatError(csv + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_list(line);
    if (header.size() < 2) throw FormatError(csv + ": header needs image and class columns");
    Manifest manifest;
    manifest.root = images;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto cells = split_list(line);
      if (cells.size() != header.size()) {
        throw FormatError(csv + ":" + std::to_string(line_no) + ": wrong column count");
      }
      std::size_t hot = 0, chosen = 0;
      for (std::size_t c = 1; c < cells.size(); ++c) {
        if (std::stod(cells[c]) > 0.5) {
          ++hot;
          chosen = c;
        }
      }
      if (hot != 1) throw FormatError(csv + ":" + std::to_string(line_no) + ": not one-hot");
      manifest.records.push_back({cells[0] + ".jpg", header[chosen]});
    }
    save_manifest(manifest, out);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spmix: saliency-guided patch mixup for long-tailed classification"};
  app.require_subcommand(1);
  SplitCommand split;
  GenerateCommand generate;
  SaliencyCommand saliency;
  AugmentCommand augment;
  TrainCommand train;
  ProbeCommand probe;
  EvalCommand eval;
  AblateCommand ablate;
  ImportIsicCommand import_isic;
  split.add(app);
  generate.add(app);
  saliency.add(app);
  augment.add(app);
  train.add(app);
  probe.add(app);
  eval.add(app);
  ablate.add(app);
  import_isic.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
