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

#include "spmix/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <cstring>
#include <malloc.h>
#include <string>
#include <thread>
#include <vector>

namespace spmix::kernels {

namespace {

std::size_t env_threads() {
  const char* env = std::getenv("SPMIX_THREADS");
  std::size_t requested = 0;
  if (env != nullptr) {
    try {
      requested = static_cast<std::size_t>(std::stoul(env));
    } catch (...) {
      requested = 0;
    }
  }
  if (requested == 0) {
    requested = std::max(1u, std::thread::hardware_concurrency());
  }
  return requested;
}

// Activation buffers of a training step are tens of MB and are freed every
// step. Keeping them on the heap instead of fresh mmaps avoids refaulting
// zeroed pages on each allocation.
const bool kHeapTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();

std::atomic<std::size_t>& configured_threads() {
  static std::atomic<std::size_t> threads{env_threads()};
  return threads;
}

constexpr std::size_t kMr = 6;
constexpr std::size_t kNr = 16;
constexpr std::size_t kKc = 256;

// Packs rows [0, kc) of op(B), columns [j0, j0 + kNr), as out[p * kNr + c],
// zero padded. `ld` is the row length of the stored B when transposed.
void pack_b(const double* b, bool trans, std::size_t n, std::size_t kc, std::size_t ld,
            std::size_t j0, double* out) {
  const std::size_t cols = std::min(kNr, n - j0);
  for (std::size_t p = 0; p < kc; ++p) {
    double* dst = out + p * kNr;
    if (trans) {
      for (std::size_t c = 0; c < cols; ++c) dst[c] = b[(j0 + c) * ld + p];
    } else {
      std::memcpy(dst, b + p * n + j0, cols * sizeof(double));
    }
    std::fill(dst + cols, dst + kNr, 0.0);
  }
}

using Lane = double __attribute__((vector_size(64)));
using UnalignedLane = double __attribute__((vector_size(64), aligned(8)));
constexpr std::size_t kLanes = sizeof(Lane) / sizeof(double);
constexpr std::size_t kLanesPerRow = kNr / kLanes;

// kMr x kNr block of C. Row r of op(A) has element p at a[r * row_stride +
// p * k_stride]; rows past `rows` repeat the last valid row and are dropped.
// Each element sums over p in ascending order.
void micro_kernel(std::size_t k, const double* a, std::size_t row_stride, std::size_t k_stride,
                  const double* __restrict bp, double* __restrict c, std::size_t ldc,
                  std::size_t rows, std::size_t cols, bool accumulate) {
  const double* arow[kMr];
  for (std::size_t r = 0; r < kMr; ++r) arow[r] = a + std::min(r, rows - 1) * row_stride;
  Lane acc[kMr][kLanesPerRow] = {};
  for (std::size_t p = 0; p < k; ++p) {
    Lane bv[kLanesPerRow];
    for (std::size_t l = 0; l < kLanesPerRow; ++l) {
      bv[l] = *reinterpret_cast<const UnalignedLane*>(bp + p * kNr + l * kLanes);
    }
    const std::size_t offset = p * k_stride;
    for (std::size_t r = 0; r < kMr; ++r) {
      const double av = arow[r][offset];
      for (std::size_t l = 0; l < kLanesPerRow; ++l) acc[r][l] += av * bv[l];
    }
  }
  double out[kMr][kNr];
  std::memcpy(out, acc, sizeof(out));
  for (std::size_t r = 0; r < rows; ++r) {
    double* crow = c + r * ldc;
    if (accumulate) {
      for (std::size_t j = 0; j < cols; ++j) crow[j] += out[r][j];
    } else {
      for (std::size_t j = 0; j < cols; ++j) crow[j] = out[r][j];
    }
  }
}

}  // namespace

std::size_t thread_count() { return configured_threads().load(); }

void set_thread_count(std::size_t threads) {
  configured_threads().store(threads == 0 ? env_threads() : threads);
}

void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t workers =
      std::min(thread_count(), std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_chunk)));
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(0, std::min(n, chunk));
  for (auto& t : pool) t.join();
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, bool trans_a,
          const double* b, bool trans_b, double* c, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    return;
  }
  const std::size_t row_blocks = (m + kMr - 1) / kMr;
  const std::size_t col_blocks = (n + kNr - 1) / kNr;
  // op(A) row i, element p: a[i * k + p], or a[p * m + i] when transposed.
  const std::size_t row_stride = trans_a ? 1 : k;
  const std::size_t k_stride = trans_a ? m : 1;
  // Row blocks are split across workers; ~64k multiply-adds per chunk.
  const std::size_t min_blocks = std::max<std::size_t>(1, 65536 / std::max<std::size_t>(1, kMr * n * k));
  std::vector<double> b_packed(col_blocks * std::min(k, kKc) * kNr);
  // K is processed in slabs so a packed B panel stays cache resident; slabs
  // are added to C in ascending order.
  for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
    const std::size_t kc = std::min(kKc, k - p0);
    const double* b_slab = trans_b ? b + p0 : b + p0 * n;
    for (std::size_t jb = 0; jb < col_blocks; ++jb) {
      pack_b(b_slab, trans_b, n, kc, k, jb * kNr, b_packed.data() + jb * kc * kNr);
    }
    const double* a_slab = a + p0 * k_stride;
    const bool add = accumulate || p0 > 0;
    parallel_for(row_blocks, min_blocks, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t ib = lo; ib < hi; ++ib) {
        const std::size_t i0 = ib * kMr;
        const std::size_t rows = std::min(kMr, m - i0);
        for (std::size_t jb = 0; jb < col_blocks; ++jb) {
          const std::size_t j0 = jb * kNr;
          micro_kernel(kc, a_slab + i0 * row_stride, row_stride, k_stride,
                       b_packed.data() + jb * kc * kNr, c + i0 * n + j0, n, rows,
                       std::min(kNr, n - j0), add);
        }
      }
    });
  }
}

}  // namespace spmix::kernels
