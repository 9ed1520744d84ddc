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


#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "spmix/error.hpp"
#include "spmix/dataset.hpp"
#include "spmix/saliency.hpp"

using namespace spmix;
namespace fs = std::filesystem;

namespace {

Manifest manifest_with(const std::vector<std::size_t>& counts) {
  Manifest m;
  m.root = "/data";
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i) {
      m.records.push_back({"c" + std::to_string(c) + "/" + std::to_string(i) + ".png",
                           "c" + std::to_string(c)});
    }
  }
  return m;
}

std::set<std::string> paths(const Manifest& m) {
  std::set<std::string> out;
  for (const auto& r : m.records) out.insert(r.path);
  return out;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("split sizes follow the smallest class") {
  const DatasetSplit split = split_dataset(manifest_with({100, 50, 10}), 1);
  CHECK(split.test.class_counts() == std::vector<std::size_t>{2, 2, 2});
  CHECK(split.val.class_counts() == std::vector<std::size_t>{1, 1, 1});
  CHECK(split.train.class_counts() == std::vector<std::size_t>{97, 47, 7});
}

TEST_CASE("ten samples of one class split 7/1/2") {
  const DatasetSplit split = split_dataset(manifest_with({10}), 2);
  CHECK(split.train.records.size() == 7);
  CHECK(split.val.records.size() == 1);
  CHECK(split.test.records.size() == 2);
}

TEST_CASE("split is a partition and reproducible") {
  const Manifest m = manifest_with({40, 23, 17, 60});
  const DatasetSplit a = split_dataset(m, 9), b = split_dataset(m, 9), c = split_dataset(m, 10);
  std::set<std::string> all;
  std::size_t total = 0;
  for (const Manifest* part : {&a.train, &a.val, &a.test}) {
    const auto p = paths(*part);
    total += part->records.size();
    all.insert(p.begin(), p.end());
  }
  CHECK(total == m.records.size());
  CHECK(all == paths(m));
  CHECK(format_manifest(a.test) == format_manifest(b.test));
  CHECK(format_manifest(a.train) == format_manifest(b.train));
  CHECK(format_manifest(a.test) != format_manifest(c.test));
  const auto counts = a.test.class_counts();
  CHECK(std::all_of(counts.begin(), counts.end(), [&](std::size_t n) { return n == counts[0]; }));
}

TEST_CASE("classes too small to split are named") {
  Manifest m = manifest_with({30, 2});
  try {
    split_dataset(m, 1);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("c1") != std::string::npos);
  }
}

TEST_CASE("subset partition") {
  const SubsetPartition p = partition_subsets({6705, 1113, 514, 115}, {1000, 200});
  CHECK(p.subset_of == std::vector<Subset>{Subset::kMany, Subset::kMany, Subset::kMedium, Subset::kFew});
  CHECK(p.head_mask() == std::vector<bool>{true, true, false, false});
  const SubsetPartition same = partition_subsets({50, 50, 50}, {1000, 200});
  CHECK(same.subset_of == std::vector<Subset>(3, Subset::kFew));
  const SubsetPartition three = partition_subsets({10, 100, 1000}, {500, 50});
  CHECK(three.subset_of == std::vector<Subset>{Subset::kFew, Subset::kMedium, Subset::kMany});
  CHECK_THROWS_AS(partition_subsets({1, 2}, {10, 20}), ConfigError);
}

TEST_CASE("manifest text round-trip") {
  const Manifest m = manifest_with({2, 3});
  const std::string text = format_manifest(m);
  const Manifest back = parse_manifest(text, m.root);
  CHECK(format_manifest(back) == text);
  CHECK(back.labels() == std::vector<int>{0, 0, 1, 1, 1});
  CHECK(parse_manifest("a.png\tx\r\nb.png\ty\r\n", "/").records.size() == 2);
  CHECK_THROWS_AS(parse_manifest("no-tab-here\n", "/"), FormatError);
  CHECK_THROWS_AS(parse_manifest("a.png\tx\na.png\tx\n", "/").validate(), FormatError);
  CHECK_THROWS_AS(m.labels({"c0"}), ConfigError);
}

TEST_CASE("manifest files resolve relative to their directory") {
  const fs::path dir = fs::temp_directory_path() / "spmix_unit_dataset" / "nested";
  fs::create_directories(dir);
  Manifest m;
  m.root = dir.parent_path();
  m.records = {{"imgs/a.png", "x"}};
  save_manifest(m, dir / "list.tsv");
  const Manifest back = load_manifest(dir / "list.tsv");
  CHECK(fs::weakly_canonical(back.resolve(back.records[0])) ==
        fs::weakly_canonical(dir.parent_path() / "imgs/a.png"));
  CHECK_THROWS_AS(load_manifest(dir / "missing.tsv"), IoError);
}

TEST_CASE("synthetic set counts and determinism") {
  SyntheticConfig config;
  config.image_size = 32;
  config.seed = 3;
  const SyntheticDataset a = generate_synthetic(config);
  CHECK(a.images.size() == 820);
  CHECK(a.class_names.size() == 5);
  std::vector<std::size_t> counts(5, 0);
  for (int l : a.labels) ++counts[l];
  CHECK(counts == config.counts);
  for (const auto& image : a.images) {
    CHECK(image.height == 32);
    CHECK(image.in_unit_range());
  }
  const SyntheticDataset b = generate_synthetic(config);
  CHECK(a.images[17].data == b.images[17].data);
  CHECK(a.images[815].data == b.images[815].data);
}

TEST_CASE("synthetic files and manifest") {
  SyntheticConfig config;
  config.counts = {3, 2};
  config.image_size = 16;
  const fs::path dir = fs::temp_directory_path() / "spmix_unit_dataset" / "synthetic";
  fs::remove_all(dir);
  const Manifest m = write_synthetic(generate_synthetic(config), dir);
  CHECK(m.class_counts() == std::vector<std::size_t>{3, 2});
  const Manifest back = load_manifest(dir / "manifest.tsv");
  CHECK(format_manifest(back) == format_manifest(m));
  const auto images = load_images(back, 16);
  CHECK(images.size() == 5);
}

TEST_CASE("saliency peaks inside the lesion") {
  SyntheticConfig config;
  config.counts = {20, 20, 20, 20, 20};
  config.seed = 11;
  const SyntheticDataset data = generate_synthetic(config);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    const SaliencyMap map = static_saliency(data.images[i], default_saliency_windows());
    const std::size_t best =
        std::max_element(map.values.begin(), map.values.end()) - map.values.begin();
    if (data.blobs[i].contains(best / map.width, best % map.width)) ++inside;
  }
  CHECK(static_cast<double>(inside) >= 0.95 * static_cast<double>(data.images.size()));
}

}  // TEST_SUITE
