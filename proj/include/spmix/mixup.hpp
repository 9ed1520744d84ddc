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
#include <span>
#include <string>

#include "spmix/image.hpp"
#include "spmix/random.hpp"
#include "spmix/saliency.hpp"
#include "spmix/tensor.hpp"

namespace spmix {

// Per-token blend of token maps (B, N, D): r * tail + (1 - r) * head, with
// ratios (B, N) applied across all D channels of a token. Differentiable in
// both token inputs; ratios are constants.
Var mix_features(Var tail_tokens, Var head_tokens, const Tensor& ratios);

// Stacks per-sample grids into a (B, G*G) ratio tensor.
Tensor ratio_tensor(std::span<const PatchRatioGrid> grids);

// Blockwise pixel blend; image sides must be multiples of the grid side.
ImageTensor mix_images(const ImageTensor& tail, const ImageTensor& head,
                       const PatchRatioGrid& ratios);

/// How per-patch ratios are derived for a tail/head pair. The four values
/// are the ablation grid over {patch-based, saliency-guided}.
enum class MixStrategy {
  kScalarBeta,      // neither: one Beta-sampled ratio per pair
  kRandomPatch,     // patch-based only: independent per-patch ratios
  kSaliencyGlobal,  // saliency only: one ratio from the whole merged map
  kSaliencyPatch,   // both (SPMix)
};

std::string to_string(MixStrategy strategy);

struct MixConfig {
  RatioPipelineConfig ratio;
  MixStrategy strategy = MixStrategy::kSaliencyPatch;
  // Beta(a, a) parameter for kScalarBeta.
  double beta = 1.0;
};

PatchRatioGrid mixing_ratios(const ImageTensor& tail_view, const ImageTensor& head_view,
                             const MixConfig& config, Rng& rng);

/// Two augmented views of a tail sample and its head partner with one ratio
/// grid per view pair. The pair is labeled with the tail class.
struct MixedPair {
  ImageTensor tail_view1, tail_view2;
  ImageTensor head_view1, head_view2;
  PatchRatioGrid ratio1, ratio2;
  int label = -1;
};

MixedPair build_mixed_pair(const ImageTensor& tail, const ImageTensor& head, int tail_label,
                           const AugmentationPolicy& policy, const MixConfig& config, Rng& rng);

}  // namespace spmix
