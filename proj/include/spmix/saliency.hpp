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
#include <filesystem>
#include <span>
#include <vector>

#include "spmix/image.hpp"
#include "spmix/random.hpp"

namespace spmix {

/// Per-pixel saliency scores. Raw maps are nonnegative; normalized maps lie
/// in [0,1].
struct SaliencyMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  bool normalized = false;

  SaliencyMap() = default;
  SaliencyMap(std::size_t h, std::size_t w, double fill = 0.0)
      : height(h), width(w), values(h * w, fill) {}

  double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

/// G x G grid of per-patch mixup ratios (weight of the tail operand), each in
/// [0, alpha]. Patch (i, j) is stored at i * grid + j, matching token order.
struct PatchRatioGrid {
  std::size_t grid = 0;
  double alpha = 1.0;
  std::vector<double> ratios;

  double at(std::size_t i, std::size_t j) const { return ratios[i * grid + j]; }
  // Uniform grid; ratio 1 means "tail operand only".
  static PatchRatioGrid constant(std::size_t grid, double value, double alpha = 1.0);
};

enum class RatioOrder { kClipFirst, kAverageFirst };

inline const std::vector<int>& default_saliency_windows() {
  static const std::vector<int> windows{9, 25, 49};
  return windows;
}

// (R+G+B)/3 per pixel; single-channel images pass through.
std::vector<double> grayscale(const ImageTensor& image);

// Center-surround saliency: sum over window sizes of |gray - boxmean(gray)|.
// Box windows are truncated at the image border and averaged over the pixels
// they cover. Windows must be odd, >= 3 and <= min(H, W).
SaliencyMap static_saliency(const ImageTensor& image, std::span<const int> windows);

SaliencyMap merge_saliency(const SaliencyMap& tail, const SaliencyMap& head);
SaliencyMap add_noise(const SaliencyMap& map, double amplitude, Rng& rng);
// (v - min) / (max - min); a constant map becomes 0.5 everywhere.
SaliencyMap minmax_normalize(const SaliencyMap& map);
SaliencyMap resize_saliency(const SaliencyMap& map, std::size_t height, std::size_t width);

// Clip at alpha, then average each of the G x G patches (or the reverse for
// kAverageFirst). Maps whose sides are not multiples of G are bilinearly
// resized up to the next multiple first.
PatchRatioGrid patch_ratios(const SaliencyMap& map, std::size_t grid, double alpha,
                            RatioOrder order = RatioOrder::kClipFirst);

struct RatioPipelineConfig {
  std::vector<int> windows = default_saliency_windows();
  double alpha = 0.8;
  std::size_t grid = 8;
  double noise = 0.1;
  RatioOrder order = RatioOrder::kClipFirst;
};

// saliency(tail), saliency(head) -> merge -> noise -> normalize -> ratios.
PatchRatioGrid lesion_aware_ratios(const ImageTensor& tail, const ImageTensor& head,
                                   const RatioPipelineConfig& config, Rng& rng);
// Same pipeline, returning the normalized merged map as well.
PatchRatioGrid lesion_aware_ratios(const ImageTensor& tail, const ImageTensor& head,
                                   const RatioPipelineConfig& config, Rng& rng,
                                   SaliencyMap* merged_normalized);

// Values are clamped to [0,1]; normalize raw maps first.
ImageTensor saliency_to_image(const SaliencyMap& map);
void save_saliency(const SaliencyMap& map, const std::filesystem::path& path);

}  // namespace spmix
