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


#include "spmix/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spmix/error.hpp"

namespace spmix {

PatchRatioGrid PatchRatioGrid::constant(std::size_t grid, double value, double alpha) {
  PatchRatioGrid out;
  out.grid = grid;
  out.alpha = alpha;
  out.ratios.assign(grid * grid, value);
  return out;
}

std::vector<double> grayscale(const ImageTensor& image) {
  require(image.channels == 1 || image.channels == 3, "grayscale: channels must be 1 or 3");
  const std::size_t pixels = image.height * image.width;
  std::vector<double> gray(pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    if (image.channels == 1) {
      gray[p] = image.data[p];
    } else {
      const double* px = image.data.data() + p * 3;
      gray[p] = (px[0] + px[1] + px[2]) / 3.0;
    }
  }
  return gray;
}

SaliencyMap static_saliency(const ImageTensor& image, std::span<const int> windows) {
  const std::size_t h = image.height, w = image.width;
  require(h > 0 && w > 0, "static_saliency: empty image");
  require(!windows.empty(), "static_saliency: no window sizes given");
  for (int k : windows) {
    require(k >= 3 && k % 2 == 1 && static_cast<std::size_t>(k) <= std::min(h, w),
            "static_saliency: window size " + std::to_string(k) +
                " must be odd, >= 3 and <= min(H,W) = " + std::to_string(std::min(h, w)));
  }
  // Offsetting by the first pixel keeps flat regions exactly zero in the
  // summed-area table.
  std::vector<double> gray = grayscale(image);
  const double offset = gray.front();
  for (double& v : gray) v -= offset;

  // Summed-area table with a zero row and column in front.
  std::vector<double> table((h + 1) * (w + 1), 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    double row = 0.0;
    for (std::size_t x = 0; x < w; ++x) {
      row += gray[y * w + x];
      table[(y + 1) * (w + 1) + x + 1] = table[y * (w + 1) + x + 1] + row;
    }
  }

  SaliencyMap map(h, w);
  for (int k : windows) {
    const long half = k / 2;
    for (std::size_t y = 0; y < h; ++y) {
      const std::size_t y0 = static_cast<std::size_t>(std::max(0L, static_cast<long>(y) - half));
      const std::size_t y1 = std::min(h, y + static_cast<std::size_t>(half) + 1);
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t x0 =
            static_cast<std::size_t>(std::max(0L, static_cast<long>(x) - half));
        const std::size_t x1 = std::min(w, x + static_cast<std::size_t>(half) + 1);
        const double box = table[y1 * (w + 1) + x1] - table[y0 * (w + 1) + x1] -
                           table[y1 * (w + 1) + x0] + table[y0 * (w + 1) + x0];
        const double mean = box / static_cast<double>((y1 - y0) * (x1 - x0));
        map.at(y, x) += std::abs(gray[y * w + x] - mean);
      }
    }
  }
  return map;
}

SaliencyMap merge_saliency(const SaliencyMap& tail, const SaliencyMap& head) {
  require(tail.height == head.height && tail.width == head.width,
          "merge_saliency: dimension mismatch " + std::to_string(tail.height) + "x" +
              std::to_string(tail.width) + " vs " + std::to_string(head.height) + "x" +
              std::to_string(head.width));
  SaliencyMap out(tail.height, tail.width);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = std::max(tail.values[i], head.values[i]);
  }
  out.normalized = tail.normalized && head.normalized;
  return out;
}

SaliencyMap add_noise(const SaliencyMap& map, double amplitude, Rng& rng) {
  require(amplitude >= 0.0, "add_noise: amplitude must be nonnegative");
  SaliencyMap out = map;
  out.normalized = false;
  if (amplitude == 0.0) {
    out.normalized = map.normalized;
    return out;
  }
  for (double& v : out.values) v = std::max(0.0, v + rng.uniform(0.0, amplitude));
  return out;
}

SaliencyMap minmax_normalize(const SaliencyMap& map) {
  SaliencyMap out = map;
  out.normalized = true;
  if (map.values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(map.values.begin(), map.values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi == lo) {
    std::fill(out.values.begin(), out.values.end(), 0.5);
    return out;
  }
  const double span = hi - lo;
  for (double& v : out.values) v = (v - lo) / span;
  return out;
}

SaliencyMap resize_saliency(const SaliencyMap& map, std::size_t height, std::size_t width) {
  if (map.height == height && map.width == width) return map;
  ImageTensor plane(map.height, map.width, 1);
  plane.data = map.values;
  const ImageTensor resized = resize_bilinear(plane, height, width);
  SaliencyMap out(height, width);
  out.values = resized.data;
  out.normalized = map.normalized;
  return out;
}

PatchRatioGrid patch_ratios(const SaliencyMap& map, std::size_t grid, double alpha,
                            RatioOrder order) {
  require(alpha > 0.0 && alpha <= 1.0,
          "patch_ratios: alpha must lie in (0,1], got " + std::to_string(alpha));
  require(grid > 0, "patch_ratios: grid must be positive");
  require(map.height > 0 && map.width > 0, "patch_ratios: empty map");

  const std::size_t h = grid * ((map.height + grid - 1) / grid);
  const std::size_t w = grid * ((map.width + grid - 1) / grid);
  const SaliencyMap fitted = resize_saliency(map, h, w);
  const std::size_t ph = h / grid, pw = w / grid;
  const double count = static_cast<double>(ph * pw);

  PatchRatioGrid out;
  out.grid = grid;
  out.alpha = alpha;
  out.ratios.resize(grid * grid);
  for (std::size_t gi = 0; gi < grid; ++gi) {
    for (std::size_t gj = 0; gj < grid; ++gj) {
      double total = 0.0;
      for (std::size_t y = gi * ph; y < (gi + 1) * ph; ++y) {
        for (std::size_t x = gj * pw; x < (gj + 1) * pw; ++x) {
          const double v = std::max(0.0, fitted.at(y, x));
          total += order == RatioOrder::kClipFirst ? std::min(alpha, v) : v;
        }
      }
      const double mean = total / count;
      out.ratios[gi * grid + gj] = order == RatioOrder::kClipFirst ? mean : std::min(alpha, mean);
    }
  }
  return out;
}

PatchRatioGrid lesion_aware_ratios(const ImageTensor& tail, const ImageTensor& head,
                                   const RatioPipelineConfig& config, Rng& rng) {
  return lesion_aware_ratios(tail, head, config, rng, nullptr);
}

PatchRatioGrid lesion_aware_ratios(const ImageTensor& tail, const ImageTensor& head,
                                   const RatioPipelineConfig& config, Rng& rng,
                                   SaliencyMap* merged_normalized) {
  require(tail.height == head.height && tail.width == head.width,
          "lesion_aware_ratios: tail and head images differ in size");
  const SaliencyMap merged =
      merge_saliency(static_saliency(tail, config.windows), static_saliency(head, config.windows));
  const SaliencyMap normalized = minmax_normalize(add_noise(merged, config.noise, rng));
  if (merged_normalized != nullptr) *merged_normalized = normalized;
  return patch_ratios(normalized, config.grid, config.alpha, config.order);
}

ImageTensor saliency_to_image(const SaliencyMap& map) {
  ImageTensor image(map.height, map.width, 1);
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    image.data[i] = std::clamp(map.values[i], 0.0, 1.0);
  }
  return image;
}

void save_saliency(const SaliencyMap& map, const std::filesystem::path& path) {
  save_image(saliency_to_image(map), path);
}

}  // namespace spmix
