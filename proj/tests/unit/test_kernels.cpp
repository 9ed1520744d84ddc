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


#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "spmix/kernels.hpp"

using namespace spmix;

namespace {

std::vector<double> naive(std::size_t m, std::size_t n, std::size_t k, const std::vector<double>& a,
                          bool ta, const std::vector<double>& b, bool tb) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta ? a[p * m + i] : a[i * k + p];
        const double bv = tb ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] = s;
    }
  }
  return c;
}

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("gemm matches the naive product for every layout and edge size") {
  Rng rng(5);
  const std::size_t sizes[][3] = {{1, 1, 1},  {6, 16, 4},   {7, 17, 3},  {13, 33, 300},
                                  {2, 50, 1}, {30, 5, 513}, {65, 3, 9}};
  for (const auto& s : sizes) {
    const std::size_t m = s[0], n = s[1], k = s[2];
    for (int layout = 0; layout < 4; ++layout) {
      const bool ta = layout & 1, tb = layout & 2;
      const auto a = random_vector(m * k, rng);
      const auto b = random_vector(k * n, rng);
      const auto expected = naive(m, n, k, a, ta, b, tb);
      std::vector<double> c(m * n, 7.0);
      kernels::gemm(m, n, k, a.data(), ta, b.data(), tb, c.data(), false);
      double worst = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) worst = std::max(worst, std::abs(c[i] - expected[i]));
      CAPTURE(m);
      CAPTURE(n);
      CAPTURE(k);
      CAPTURE(layout);
      CHECK(worst < 1e-12);

      std::vector<double> acc(m * n, 1.0);
      kernels::gemm(m, n, k, a.data(), ta, b.data(), tb, acc.data(), true);
      worst = 0.0;
      for (std::size_t i = 0; i < acc.size(); ++i) {
        worst = std::max(worst, std::abs(acc[i] - expected[i] - 1.0));
      }
      CHECK(worst < 1e-12);
    }
  }
}

TEST_CASE("gemm with empty inner dimension") {
  std::vector<double> c(4, 3.0);
  kernels::gemm(2, 2, 0, nullptr, false, nullptr, false, c.data(), false);
  CHECK(c == std::vector<double>(4, 0.0));
}

TEST_CASE("results do not depend on the thread count") {
  Rng rng(9);
  const std::size_t m = 96, n = 40, k = 70;
  const auto a = random_vector(m * k, rng);
  const auto b = random_vector(k * n, rng);
  std::vector<double> one(m * n), four(m * n);
  const std::size_t before = kernels::thread_count();
  kernels::set_thread_count(1);
  kernels::gemm(m, n, k, a.data(), false, b.data(), false, one.data(), false);
  kernels::set_thread_count(4);
  kernels::gemm(m, n, k, a.data(), false, b.data(), false, four.data(), false);
  kernels::set_thread_count(before);
  CHECK(one == four);
}

TEST_CASE("parallel_for covers every index once") {
  std::vector<int> hits(1000, 0);
  const std::size_t before = kernels::thread_count();
  kernels::set_thread_count(3);
  kernels::parallel_for(hits.size(), 10, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) ++hits[i];
  });
  kernels::set_thread_count(before);
  CHECK(hits == std::vector<int>(1000, 1));
}

}  // TEST_SUITE
