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
#include <vector>

#include "spmix/random.hpp"

namespace spmix {

/// H x W x C image, row-major HWC, values in [0,1].
struct ImageTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  ImageTensor() = default;
  ImageTensor(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return data[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data[(y * width + x) * channels + c];
  }
  bool same_shape(const ImageTensor& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }
  bool in_unit_range() const;
};

// Decodes a PNG or JPEG (detected from magic bytes) to [0,1] floats without
// resizing. Gray images keep one channel; alpha is dropped.
ImageTensor decode_image(const std::filesystem::path& path);
// decode_image followed by a bilinear resize to size x size (0 keeps size).
ImageTensor load_image(const std::filesystem::path& path, std::size_t size);
// 1 -> 3 duplicates the gray plane; 3 -> 1 averages RGB.
ImageTensor convert_channels(const ImageTensor& image, std::size_t channels);

// Bilinear with half-pixel centers and clamped borders; no anti-aliasing.
ImageTensor resize_bilinear(const ImageTensor& image, std::size_t height, std::size_t width);

// Writes an 8-bit PNG; values are clamped to [0,1] and scaled by 255 with
// round-half-up.
void save_image(const ImageTensor& image, const std::filesystem::path& path);
std::uint8_t quantize_unit(double value);

struct AugmentationPolicy {
  // Fraction of the image area kept by the random square crop.
  double crop_scale_min = 0.5;
  double crop_scale_max = 1.0;
  double flip_probability = 0.5;
  // Brightness offset drawn from [-j, j], contrast factor from [1-j, 1+j].
  double jitter = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
  static AugmentationPolicy identity() { return {1.0, 1.0, 0.0, 0.0, 0}; }
};

// Random resized crop, horizontal flip, brightness/contrast jitter. Output
// has the input's shape and is clamped to [0,1].
ImageTensor augment_view(const ImageTensor& image, const AugmentationPolicy& policy, Rng& rng);

ImageTensor flip_horizontal(const ImageTensor& image);

}  // namespace spmix
