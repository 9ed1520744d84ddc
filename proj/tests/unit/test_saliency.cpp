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
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "spmix/error.hpp"
#include "spmix/saliency.hpp"

using namespace spmix;

namespace {

SaliencyMap random_map(std::size_t h, std::size_t w, Rng& rng) {
  SaliencyMap m(h, w);
  for (double& v : m.values) v = rng.uniform();
  m.normalized = true;
  return m;
}

SaliencyMap map_of(std::size_t h, std::size_t w, std::vector<double> values) {
  SaliencyMap m(h, w);
  m.values = std::move(values);
  return m;
}

}  // namespace

TEST_SUITE("saliency") {

TEST_CASE("constant image gives an all-zero map") {
  const std::vector<int> windows{3, 5};
  SaliencyMap m = static_saliency(ImageTensor(9, 9, 3, 0.4), windows);
  for (double v : m.values) CHECK(v == 0.0);
}

TEST_CASE("single bright pixel is the maximum") {
  ImageTensor image(9, 9, 1, 0.0);
  image.at(4, 6, 0) = 1.0;
  const std::vector<int> windows{3};
  SaliencyMap m = static_saliency(image, windows);
  const auto best = std::max_element(m.values.begin(), m.values.end()) - m.values.begin();
  CHECK(best == 4 * 9 + 6);
  SaliencyMap ref = oracle::saliency(image, windows);
  for (std::size_t i = 0; i < m.values.size(); ++i) CHECK(std::abs(m.values[i] - ref.values[i]) < 1e-12);
}

TEST_CASE("summed-area saliency equals the nested-loop oracle") {
  Rng rng(11);
  const std::vector<std::vector<int>> window_sets{{3}, {3, 5, 7}, {9}};
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 9 + rng.index(12), w = 9 + rng.index(12);
    ImageTensor image = oracle::random_image(h, w, trial % 2 ? 3 : 1, rng);
    const auto& windows = window_sets[trial % window_sets.size()];
    SaliencyMap fast = static_saliency(image, windows);
    SaliencyMap ref = oracle::saliency(image, windows);
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.values.size(); ++i) {
      worst = std::max(worst, std::abs(fast.values[i] - ref.values[i]));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("window validation") {
  ImageTensor image(8, 8, 3, 0.1);
  const std::vector<int> even{4}, big{9}, tiny{1};
  CHECK_THROWS_AS(static_saliency(image, even), ContractViolation);
  CHECK_THROWS_AS(static_saliency(image, big), ContractViolation);
  CHECK_THROWS_AS(static_saliency(image, tiny), ContractViolation);
}

TEST_CASE("merge is an elementwise max") {
  Rng rng(2);
  SaliencyMap m = random_map(4, 5, rng);
  CHECK(merge_saliency(m, SaliencyMap(4, 5, 0.0)).values == m.values);
  CHECK(merge_saliency(m, m).values == m.values);
  CHECK(merge_saliency(map_of(1, 2, {0.2, 0.9}), map_of(1, 2, {0.5, 0.1})).values ==
        std::vector<double>{0.5, 0.9});
  SaliencyMap other = random_map(5, 4, rng);
  CHECK_THROWS_AS(merge_saliency(m, other), ContractViolation);
}

TEST_CASE("noise") {
  Rng data(3);
  SaliencyMap m = random_map(6, 6, data);
  Rng rng(1);
  CHECK(add_noise(m, 0.0, rng).values == m.values);
  Rng a(7), b(7);
  SaliencyMap na = add_noise(m, 0.1, a);
  CHECK(na.values == add_noise(m, 0.1, b).values);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    CHECK(na.values[i] >= m.values[i]);
    CHECK(na.values[i] <= m.values[i] + 0.1);
  }
  CHECK_THROWS_AS(add_noise(m, -0.1, rng), ContractViolation);
}

TEST_CASE("min-max normalization") {
  CHECK(minmax_normalize(map_of(1, 3, {2, 4, 6})).values == std::vector<double>{0.0, 0.5, 1.0});
  SaliencyMap flat = minmax_normalize(SaliencyMap(3, 3, 7.0));
  for (double v : flat.values) CHECK(v == 0.5);
  CHECK(flat.normalized);
}

TEST_CASE("patch ratio examples") {
  PatchRatioGrid ones = patch_ratios(SaliencyMap(8, 8, 1.0), 4, 0.8);
  for (double r : ones.ratios) CHECK(r == 0.8);
  PatchRatioGrid zeros = patch_ratios(SaliencyMap(8, 8, 0.0), 4, 0.8);
  for (double r : zeros.ratios) CHECK(r == 0.0);
  PatchRatioGrid single = patch_ratios(map_of(2, 2, {0.2, 0.4, 0.6, 0.8}), 1, 0.8);
  REQUIRE(single.ratios.size() == 1);
  CHECK(single.ratios[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(patch_ratios(SaliencyMap(4, 4, 0.5), 2, 0.0), ContractViolation);
  CHECK_THROWS_AS(patch_ratios(SaliencyMap(4, 4, 0.5), 2, 1.5), ContractViolation);
}

TEST_CASE("one-pixel patches give min(alpha, max(s_h, s_t)) exactly") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    SaliencyMap tail = random_map(6, 6, rng), head = random_map(6, 6, rng);
    PatchRatioGrid grid = patch_ratios(merge_saliency(tail, head), 6, 0.8);
    for (std::size_t i = 0; i < grid.ratios.size(); ++i) {
      CHECK(grid.ratios[i] == std::min(0.8, std::max(head.values[i], tail.values[i])));
    }
  }
}

TEST_CASE("clip order matters only above alpha") {
  SaliencyMap m = map_of(2, 2, {0.0, 1.0, 1.0, 1.0});
  CHECK(patch_ratios(m, 1, 0.8, RatioOrder::kClipFirst).ratios[0] == doctest::Approx(0.6));
  CHECK(patch_ratios(m, 1, 0.8, RatioOrder::kAverageFirst).ratios[0] == doctest::Approx(0.75));
  SaliencyMap low = map_of(2, 2, {0.1, 0.2, 0.3, 0.4});
  CHECK(patch_ratios(low, 1, 0.8, RatioOrder::kClipFirst).ratios[0] ==
        patch_ratios(low, 1, 0.8, RatioOrder::kAverageFirst).ratios[0]);
}

TEST_CASE("ratios grow with saliency and stay in [0, alpha]") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    SaliencyMap base = random_map(8, 8, rng);
    SaliencyMap raised = base;
    for (double& v : raised.values) v = std::min(1.0, v + rng.uniform(0.0, 0.3));
    const double alpha = rng.uniform(0.1, 1.0);
    PatchRatioGrid lo = patch_ratios(base, 4, alpha), hi = patch_ratios(raised, 4, alpha);
    for (std::size_t i = 0; i < lo.ratios.size(); ++i) {
      CHECK(lo.ratios[i] <= hi.ratios[i]);
      CHECK(hi.ratios[i] >= 0.0);
      CHECK(hi.ratios[i] <= alpha);
    }
  }
}

TEST_CASE("maps whose sides do not divide the grid are resized first") {
  PatchRatioGrid grid = patch_ratios(SaliencyMap(7, 5, 0.3), 4, 0.8);
  CHECK(grid.ratios.size() == 16);
  for (double r : grid.ratios) CHECK(r == doctest::Approx(0.3));
}

TEST_CASE("noise-free pipeline is a pure function of the images") {
  Rng data(6);
  ImageTensor tail = oracle::random_image(32, 32, 3, data);
  ImageTensor head = oracle::random_image(32, 32, 3, data);
  RatioPipelineConfig config;
  config.windows = {3, 9};
  config.noise = 0.0;
  config.grid = 4;
  Rng a(1), b(999);
  SaliencyMap merged;
  PatchRatioGrid ra = lesion_aware_ratios(tail, head, config, a, &merged);
  CHECK(ra.ratios == lesion_aware_ratios(tail, head, config, b).ratios);
  CHECK(merged.normalized);
  // Recompute the chain from its parts.
  SaliencyMap expect = minmax_normalize(
      merge_saliency(oracle::saliency(tail, config.windows), oracle::saliency(head, config.windows)));
  double worst = 0.0;
  for (std::size_t i = 0; i < expect.values.size(); ++i) {
    worst = std::max(worst, std::abs(expect.values[i] - merged.values[i]));
  }
  CHECK(worst < 1e-9);
}

}  // TEST_SUITE
