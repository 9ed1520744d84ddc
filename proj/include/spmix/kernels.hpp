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
#include <functional>

namespace spmix::kernels {

// Worker count from SPMIX_THREADS (0 or unset = hardware concurrency).
std::size_t thread_count();
void set_thread_count(std::size_t threads);

// Runs fn(begin, end) over disjoint chunks of [0, n). Each index is handled
// by exactly one call, so per-element results do not depend on the split.
void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& fn);

// C(M,N) (+)= op(A) * op(B) with row-major storage. op(A) is (M,K): A is
// stored (M,K), or (K,M) when trans_a. op(B) is (K,N): B is stored (K,N), or
// (N,K) when trans_b. Every element accumulates over k in ascending order.
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, bool trans_a,
          const double* b, bool trans_b, double* c, bool accumulate);

}  // namespace spmix::kernels
