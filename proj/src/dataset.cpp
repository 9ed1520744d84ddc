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


#include "spmix/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "spmix/error.hpp"

namespace spmix {

std::vector<std::string> Manifest::class_names() const {
  std::set<std::string> names;
  for (const auto& r : records) names.insert(r.class_name);
  return {names.begin(), names.end()};
}

std::map<std::string, int> Manifest::class_ids() const {
  std::map<std::string, int> ids;
  int next = 0;
  for (const auto& name : class_names()) ids[name] = next++;
  return ids;
}

std::vector<std::size_t> Manifest::class_counts() const {
  const auto ids = class_ids();
  std::vector<std::size_t> counts(ids.size(), 0);
  for (const auto& r : records) ++counts[ids.at(r.class_name)];
  return counts;
}

std::vector<int> Manifest::labels() const { return labels(class_names()); }

std::vector<int> Manifest::labels(const std::vector<std::string>& names) const {
  std::map<std::string, int> ids;
  for (std::size_t i = 0; i < names.size(); ++i) ids[names[i]] = static_cast<int>(i);
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto it = ids.find(r.class_name);
    if (it == ids.end()) {
      throw ConfigError("manifest: class '" + r.class_name + "' is not among the known classes");
    }
    out.push_back(it->second);
  }
  return out;
}

void Manifest::validate() const {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (r.path.empty() || r.class_name.empty()) {
      throw FormatError("manifest: empty path or class name");
    }
    if (!seen.insert(r.path).second) throw FormatError("manifest: duplicate path '" + r.path + "'");
  }
}

Manifest parse_manifest(const std::string& text, const std::filesystem::path& root) {
  Manifest manifest;
  manifest.root = root;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw FormatError("manifest line " + std::to_string(line_no) +
                        ": expected 'path<TAB>class'");
    }
    manifest.records.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  manifest.validate();
  return manifest;
}

std::string format_manifest(const Manifest& manifest) {
  std::string out;
  for (const auto& r : manifest.records) out += r.path + "\t" + r.class_name + "\n";
  return out;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const auto root = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return parse_manifest(buffer.str(), root);
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  if (!dir.empty()) fs::create_directories(dir);
  Manifest out;
  const fs::path from = fs::absolute(manifest.root).lexically_normal();
  const fs::path to = fs::absolute(dir).lexically_normal();
  for (const auto& r : manifest.records) {
    const fs::path full = (from / r.path).lexically_normal();
    out.records.push_back({full.lexically_relative(to).generic_string(), r.class_name});
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write manifest " + path.string());
  file << format_manifest(out);
  if (!file) throw IoError("failed writing manifest " + path.string());
}

SplitSizes split_sizes(const std::vector<std::size_t>& class_counts) {
  require(!class_counts.empty(), "split: no classes");
  const std::size_t smallest = *std::min_element(class_counts.begin(), class_counts.end());
  return {std::max<std::size_t>(1, smallest / 10), std::max<std::size_t>(1, smallest / 5)};
}

DatasetSplit split_dataset(const Manifest& manifest, std::uint64_t seed) {
  manifest.validate();
  if (manifest.records.empty()) throw ConfigError("split: manifest is empty");
  const auto names = manifest.class_names();
  const auto counts = manifest.class_counts();
  const SplitSizes sizes = split_sizes(counts);
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (counts[c] < sizes.val + sizes.test + 1) {
      throw ConfigError("split: class '" + names[c] + "' has " + std::to_string(counts[c]) +
                        " samples; needs " + std::to_string(sizes.val + sizes.test + 1));
    }
  }

  const auto labels = manifest.labels();
  // 0 train, 1 val, 2 test
  std::vector<int> role(manifest.records.size(), 0);
  Rng rng(Rng::mix(seed ^ 0x5b117ULL));
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == static_cast<int>(c)) members.push_back(i);
    }
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return manifest.records[a].path < manifest.records[b].path;
    });
    for (std::size_t i = members.size(); i > 1; --i) {
      std::swap(members[i - 1], members[rng.index(i)]);
    }
    for (std::size_t i = 0; i < sizes.test; ++i) role[members[i]] = 2;
    for (std::size_t i = 0; i < sizes.val; ++i) role[members[sizes.test + i]] = 1;
  }

  DatasetSplit split;
  split.train.root = split.val.root = split.test.root = manifest.root;
  for (std::size_t i = 0; i < role.size(); ++i) {
    Manifest& target = role[i] == 0 ? split.train : role[i] == 1 ? split.val : split.test;
    target.records.push_back(manifest.records[i]);
  }
  return split;
}

std::string to_string(Subset subset) {
  switch (subset) {
    case Subset::kMany:
      return "many";
    case Subset::kMedium:
      return "medium";
    case Subset::kFew:
      return "few";
  }
  return "unknown";
}

std::vector<bool> SubsetPartition::head_mask() const {
  std::vector<bool> mask;
  for (Subset s : subset_of) mask.push_back(s == Subset::kMany);
  return mask;
}

SubsetPartition partition_subsets(const std::vector<std::size_t>& class_counts,
                                  SubsetThresholds thresholds) {
  if (thresholds.many_min <= thresholds.few_max) {
    throw ConfigError("subsets: many_min (" + std::to_string(thresholds.many_min) +
                      ") must exceed few_max (" + std::to_string(thresholds.few_max) + ")");
  }
  SubsetPartition partition;
  partition.thresholds = thresholds;
  for (std::size_t count : class_counts) {
    if (count >= thresholds.many_min) {
      partition.subset_of.push_back(Subset::kMany);
    } else if (count <= thresholds.few_max) {
      partition.subset_of.push_back(Subset::kFew);
    } else {
      partition.subset_of.push_back(Subset::kMedium);
    }
  }
  return partition;
}

std::vector<ImageTensor> load_images(const Manifest& manifest, std::size_t size,
                                     std::size_t channels) {
  std::vector<ImageTensor> images;
  images.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    images.push_back(convert_channels(load_image(manifest.resolve(r), size), channels));
  }
  return images;
}

namespace {

constexpr std::size_t kMaxSyntheticClasses = 8;

enum class Shape { kDisc, kSquare, kRing, kCross, kDiamond, kBar, kTriangle, kEllipse };

struct ClassStyle {
  Shape shape;
  std::array<double, 3> color;
};

// Dark lesion-like tones; neighbouring classes differ in shape and hue.
const std::array<ClassStyle, kMaxSyntheticClasses> kStyles{{
    {Shape::kDisc, {0.30, 0.18, 0.12}},
    {Shape::kSquare, {0.22, 0.20, 0.28}},
    {Shape::kRing, {0.35, 0.15, 0.15}},
    {Shape::kCross, {0.18, 0.22, 0.18}},
    {Shape::kDiamond, {0.40, 0.25, 0.10}},
    {Shape::kBar, {0.15, 0.15, 0.30}},
    {Shape::kTriangle, {0.32, 0.28, 0.22}},
    {Shape::kEllipse, {0.12, 0.10, 0.10}},
}};

// Coverage of the unit-radius shape at local coordinates (u, v).
bool inside(Shape shape, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  switch (shape) {
    case Shape::kDisc:
      return u * u + v * v <= 1.0;
    case Shape::kSquare:
      return au <= 0.85 && av <= 0.85;
    case Shape::kRing: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.3;
    }
    case Shape::kCross:
      return (au <= 0.3 && av <= 1.0) || (av <= 0.3 && au <= 1.0);
    case Shape::kDiamond:
      return au + av <= 1.0;
    case Shape::kBar:
      return au <= 1.0 && av <= 0.4;
    case Shape::kTriangle:
      return v <= 0.8 && v >= -1.0 && au <= (v + 1.0) * 0.5;
    case Shape::kEllipse:
      return u * u + (v * v) / 0.36 <= 1.0;
  }
  return false;
}

}  // namespace

SyntheticSample render_synthetic(int label, std::size_t size, Rng& rng) {
  require(label >= 0 && static_cast<std::size_t>(label) < kMaxSyntheticClasses,
          "synthetic: class id out of range (at most 8 classes)");
  require(size >= 16, "synthetic: image size must be at least 16");
  const double scale = static_cast<double>(size) / 64.0;

  // Background: skin-like base tone, smooth 5x5 noise field, fine grain.
  const std::array<double, 3> base{rng.uniform(0.70, 0.85), rng.uniform(0.55, 0.70),
                                   rng.uniform(0.45, 0.60)};
  constexpr std::size_t kCoarse = 5;
  std::array<double, kCoarse * kCoarse> field{};
  for (double& f : field) f = rng.uniform(-0.06, 0.06);
  ImageTensor image(size, size, 3);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double fy = static_cast<double>(y) / static_cast<double>(size - 1) * (kCoarse - 1);
      const double fx = static_cast<double>(x) / static_cast<double>(size - 1) * (kCoarse - 1);
      const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(fy), kCoarse - 2);
      const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(fx), kCoarse - 2);
      const double ty = fy - static_cast<double>(y0), tx = fx - static_cast<double>(x0);
      const double top = field[y0 * kCoarse + x0] * (1 - tx) + field[y0 * kCoarse + x0 + 1] * tx;
      const double bottom =
          field[(y0 + 1) * kCoarse + x0] * (1 - tx) + field[(y0 + 1) * kCoarse + x0 + 1] * tx;
      const double smooth = top * (1 - ty) + bottom * ty;
      const double grain = rng.uniform(-0.03, 0.03);
      for (std::size_t c = 0; c < 3; ++c) image.at(y, x, c) = base[c] + smooth + grain;
    }
  }

  const ClassStyle& style = kStyles[label];
  const double radius = rng.uniform(7.0, 11.0) * scale;
  const double margin = radius + 2.0;
  const double cy = rng.uniform(margin, static_cast<double>(size) - 1.0 - margin);
  const double cx = rng.uniform(margin, static_cast<double>(size) - 1.0 - margin);
  const double angle = rng.uniform(-0.3, 0.3);
  const double tone = rng.uniform(-0.04, 0.04);
  const double ca = std::cos(angle), sa = std::sin(angle);

  SyntheticSample sample;
  bool any = false;
  BoundingBox box{size, size, 0, 0};
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = (static_cast<double>(y) - cy) / radius;
      const double dx = (static_cast<double>(x) - cx) / radius;
      const double u = ca * dx + sa * dy;
      const double v = -sa * dx + ca * dy;
      if (!inside(style.shape, u, v)) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        image.at(y, x, c) = style.color[c] + tone + rng.uniform(-0.02, 0.02);
      }
      any = true;
      box.y0 = std::min(box.y0, y);
      box.x0 = std::min(box.x0, x);
      box.y1 = std::max(box.y1, y);
      box.x1 = std::max(box.x1, x);
    }
  }
  require(any, "synthetic: blob fell outside the image");
  for (double& v : image.data) v = std::clamp(v, 0.0, 1.0);
  sample.image = std::move(image);
  sample.blob = box;
  return sample;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
  if (config.counts.empty() || config.counts.size() > kMaxSyntheticClasses) {
    throw ConfigError("synthetic: need between 1 and 8 classes");
  }
  SyntheticDataset dataset;
  for (std::size_t c = 0; c < config.counts.size(); ++c) {
    if (config.counts[c] == 0) throw ConfigError("synthetic: class counts must be positive");
    char name[16];
    std::snprintf(name, sizeof(name), "class%zu", c);
    dataset.class_names.emplace_back(name);
  }
  for (std::size_t c = 0; c < config.counts.size(); ++c) {
    Rng rng(Rng::mix(config.seed * 131 + c));
    for (std::size_t i = 0; i < config.counts[c]; ++i) {
      SyntheticSample sample = render_synthetic(static_cast<int>(c), config.image_size, rng);
      dataset.images.push_back(std::move(sample.image));
      dataset.labels.push_back(static_cast<int>(c));
      dataset.blobs.push_back(sample.blob);
    }
  }
  return dataset;
}

Manifest write_synthetic(const SyntheticDataset& dataset, const std::filesystem::path& dir) {
  Manifest manifest;
  manifest.root = dir;
  std::vector<std::size_t> next(dataset.class_names.size(), 0);
  for (std::size_t i = 0; i < dataset.images.size(); ++i) {
    const std::string& cls = dataset.class_names[dataset.labels[i]];
    char file[32];
    std::snprintf(file, sizeof(file), "%05zu.png", next[dataset.labels[i]]++);
    const std::string rel = cls + "/" + file;
    std::filesystem::create_directories(dir / cls);
    save_image(dataset.images[i], dir / rel);
    manifest.records.push_back({rel, cls});
  }
  save_manifest(manifest, dir / "manifest.tsv");
  return manifest;
}

}  // namespace spmix
