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
#include <map>
#include <string>
#include <vector>

#include "spmix/image.hpp"
#include "spmix/random.hpp"

namespace spmix {

struct ManifestRecord {
  std::string path;  // relative to the manifest's root directory
  std::string class_name;
};

/// Image list with class labels. Class ids are the positions of the class
/// names in sorted order.
struct Manifest {
  std::filesystem::path root;
  std::vector<ManifestRecord> records;

  std::vector<std::string> class_names() const;
  std::map<std::string, int> class_ids() const;
  std::vector<std::size_t> class_counts() const;
  // Labels under `names` (defaults to this manifest's own classes). Throws
  // ConfigError for a class missing from `names`.
  std::vector<int> labels() const;
  std::vector<int> labels(const std::vector<std::string>& names) const;
  std::filesystem::path resolve(const ManifestRecord& record) const { return root / record.path; }
  void validate() const;
};

// Lines "relative/path<TAB>class_name", LF endings. Root = the file's directory.
Manifest load_manifest(const std::filesystem::path& path);
// Paths are rewritten relative to the destination directory.
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest parse_manifest(const std::string& text, const std::filesystem::path& root);
std::string format_manifest(const Manifest& manifest);

struct SplitSizes {
  std::size_t val = 0;
  std::size_t test = 0;
};

// n_test = floor(0.2 * min count), n_val = floor(0.1 * min count), each >= 1.
SplitSizes split_sizes(const std::vector<std::size_t>& class_counts);

struct DatasetSplit {
  Manifest train, val, test;
};

// Balanced val/test, the rest is train. Throws ConfigError naming a class
// that cannot keep at least one training sample.
DatasetSplit split_dataset(const Manifest& manifest, std::uint64_t seed);

enum class Subset { kMany, kMedium, kFew };
std::string to_string(Subset subset);

struct SubsetThresholds {
  std::size_t many_min = 1000;
  std::size_t few_max = 200;
};

struct SubsetPartition {
  SubsetThresholds thresholds;
  std::vector<Subset> subset_of;

  std::vector<bool> head_mask() const;
};

// Many when count >= many_min, Few when count <= few_max, Medium otherwise.
SubsetPartition partition_subsets(const std::vector<std::size_t>& class_counts,
                                  SubsetThresholds thresholds);

// Loads every record at size x size with the given channel count.
std::vector<ImageTensor> load_images(const Manifest& manifest, std::size_t size,
                                     std::size_t channels = 3);

struct SyntheticConfig {
  std::vector<std::size_t> counts{500, 200, 80, 30, 10};
  std::size_t image_size = 64;
  std::uint64_t seed = 0;
};

struct BoundingBox {
  std::size_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // inclusive
  bool contains(std::size_t y, std::size_t x) const {
    return y >= y0 && y <= y1 && x >= x0 && x <= x1;
  }
};

struct SyntheticSample {
  ImageTensor image;
  BoundingBox blob;
};

// Noise-texture background with one blob whose shape and tone depend on the
// class. At most 8 classes.
SyntheticSample render_synthetic(int label, std::size_t size, Rng& rng);

struct SyntheticDataset {
  std::vector<std::string> class_names;
  std::vector<ImageTensor> images;
  std::vector<int> labels;
  std::vector<BoundingBox> blobs;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& config);
// PNGs under dir/<class>/ plus dir/manifest.tsv; returns the manifest.
Manifest write_synthetic(const SyntheticDataset& dataset, const std::filesystem::path& dir);

}  // namespace spmix
