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


#include "spmix/mixup.hpp"

#include <algorithm>

#include "spmix/error.hpp"

namespace spmix {

Var mix_features(Var tail_tokens, Var head_tokens, const Tensor& ratios) {
  require(&tail_tokens.graph() == &head_tokens.graph(), "mix_features: operands on different graphs");
  const Tensor& ft = tail_tokens.value();
  const Tensor& fh = head_tokens.value();
  if (ft.rank() != 3 || ft.shape != fh.shape) {
    throw ContractViolation("mix_features: token maps differ in shape " + shape_string(ft.shape) +
                            " and " + shape_string(fh.shape));
  }
  const std::size_t b = ft.dim(0), n = ft.dim(1), d = ft.dim(2);
  if (ratios.shape != Shape{b, n}) {
    throw ContractViolation("mix_features: ratio grid " + shape_string(ratios.shape) +
                            " does not match token map " + shape_string(ft.shape));
  }
  Tensor out(ft.shape);
  for (std::size_t t = 0; t < b * n; ++t) {
    const double r = ratios.data[t];
    for (std::size_t j = 0; j < d; ++j) {
      out.data[t * d + j] = r * ft.data[t * d + j] + (1.0 - r) * fh.data[t * d + j];
    }
  }
  const std::size_t it = tail_tokens.id(), ih = head_tokens.id();
  return tail_tokens.graph().record(
      std::move(out), {it, ih}, [it, ih, b, n, d, r = ratios.data](Graph& g, std::size_t self) {
        auto gy = g.grad(self);
        if (g.requires_grad(it)) {
          auto gt = g.grad_accumulator(it);
          for (std::size_t t = 0; t < b * n; ++t)
            for (std::size_t j = 0; j < d; ++j) gt[t * d + j] += r[t] * gy[t * d + j];
        }
        if (g.requires_grad(ih)) {
          auto gh = g.grad_accumulator(ih);
          for (std::size_t t = 0; t < b * n; ++t)
            for (std::size_t j = 0; j < d; ++j) gh[t * d + j] += (1.0 - r[t]) * gy[t * d + j];
        }
      });
}

Tensor ratio_tensor(std::span<const PatchRatioGrid> grids) {
  require(!grids.empty(), "ratio_tensor: no grids");
  const std::size_t n = grids.front().ratios.size();
  Tensor out({grids.size(), n});
  for (std::size_t i = 0; i < grids.size(); ++i) {
    require(grids[i].ratios.size() == n, "ratio_tensor: grids differ in size");
    std::copy(grids[i].ratios.begin(), grids[i].ratios.end(), out.data.begin() + i * n);
  }
  return out;
}

ImageTensor mix_images(const ImageTensor& tail, const ImageTensor& head,
                       const PatchRatioGrid& ratios) {
  require(tail.same_shape(head), "mix_images: tail and head images differ in shape");
  const std::size_t g = ratios.grid;
  require(g > 0 && ratios.ratios.size() == g * g, "mix_images: malformed ratio grid");
  require(tail.height % g == 0 && tail.width % g == 0,
          "mix_images: image " + std::to_string(tail.height) + "x" + std::to_string(tail.width) +
              " not divisible by grid " + std::to_string(g));
  const std::size_t ph = tail.height / g, pw = tail.width / g;
  ImageTensor out(tail.height, tail.width, tail.channels);
  for (std::size_t y = 0; y < tail.height; ++y) {
    for (std::size_t x = 0; x < tail.width; ++x) {
      const double r = ratios.at(y / ph, x / pw);
      for (std::size_t c = 0; c < tail.channels; ++c) {
        const double t = tail.at(y, x, c), h = head.at(y, x, c);
        // Equal operands pass through unrounded.
        out.at(y, x, c) = t == h ? t : std::clamp(r * t + (1.0 - r) * h, 0.0, 1.0);
      }
    }
  }
  return out;
}

std::string to_string(MixStrategy strategy) {
  switch (strategy) {
    case MixStrategy::kScalarBeta:
      return "scalar-beta";
    case MixStrategy::kRandomPatch:
      return "random-patch";
    case MixStrategy::kSaliencyGlobal:
      return "saliency-global";
    case MixStrategy::kSaliencyPatch:
      return "saliency-patch";
  }
  return "unknown";
}

PatchRatioGrid mixing_ratios(const ImageTensor& tail_view, const ImageTensor& head_view,
                             const MixConfig& config, Rng& rng) {
  const std::size_t grid = config.ratio.grid;
  const double alpha = config.ratio.alpha;
  switch (config.strategy) {
    case MixStrategy::kScalarBeta:
      return PatchRatioGrid::constant(grid, rng.beta(config.beta, config.beta), 1.0);
    case MixStrategy::kRandomPatch: {
      PatchRatioGrid out = PatchRatioGrid::constant(grid, 0.0, alpha);
      for (double& r : out.ratios) r = std::min(alpha, rng.uniform());
      return out;
    }
    case MixStrategy::kSaliencyGlobal: {
      RatioPipelineConfig global = config.ratio;
      global.grid = 1;
      const PatchRatioGrid one = lesion_aware_ratios(tail_view, head_view, global, rng);
      return PatchRatioGrid::constant(grid, one.ratios.front(), alpha);
    }
    case MixStrategy::kSaliencyPatch:
      return lesion_aware_ratios(tail_view, head_view, config.ratio, rng);
  }
  throw ContractViolation("mixing_ratios: unknown strategy");
}

MixedPair build_mixed_pair(const ImageTensor& tail, const ImageTensor& head, int tail_label,
                           const AugmentationPolicy& policy, const MixConfig& config, Rng& rng) {
  require(tail.same_shape(head), "build_mixed_pair: tail and head images differ in shape");
  MixedPair pair;
  pair.tail_view1 = augment_view(tail, policy, rng);
  pair.tail_view2 = augment_view(tail, policy, rng);
  pair.head_view1 = augment_view(head, policy, rng);
  pair.head_view2 = augment_view(head, policy, rng);
  pair.ratio1 = mixing_ratios(pair.tail_view1, pair.head_view1, config, rng);
  pair.ratio2 = mixing_ratios(pair.tail_view2, pair.head_view2, config, rng);
  pair.label = tail_label;
  return pair;
}

}  // namespace spmix
