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


#include "spmix/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "spmix/error.hpp"

namespace spmix {

bool ImageTensor::in_unit_range() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

namespace {

enum class FileKind { kPng, kJpeg, kUnknown };

FileKind sniff(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path.string());
  unsigned char head[8] = {};
  in.read(reinterpret_cast<char*>(head), sizeof(head));
  const auto got = in.gcount();
  if (got >= 8 && png_sig_cmp(head, 0, 8) == 0) return FileKind::kPng;
  if (got >= 3 && head[0] == 0xFF && head[1] == 0xD8 && head[2] == 0xFF) return FileKind::kJpeg;
  return FileKind::kUnknown;
}

ImageTensor decode_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw IoError("corrupt PNG " + path.string() + ": " + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t channels = color ? 3 : 1;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  png_color white{255, 255, 255};
  if (!png_image_finish_read(&png, &white, buffer.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw IoError("corrupt PNG " + path.string() + ": " + message);
  }
  ImageTensor image(png.height, png.width, channels);
  for (std::size_t i = 0; i < buffer.size() && i < image.data.size(); ++i) {
    image.data[i] = buffer[i] / 255.0;
  }
  return image;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

ImageTensor decode_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw IoError("cannot open image: " + path.string());

  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  std::vector<unsigned char> pixels;
  std::size_t height = 0, width = 0, channels = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("corrupt JPEG " + path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  height = cinfo.output_height;
  width = cinfo.output_width;
  channels = static_cast<std::size_t>(cinfo.output_components);
  pixels.resize(height * width * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels.data() + cinfo.output_scanline * width * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);

  ImageTensor image(height, width, channels);
  for (std::size_t i = 0; i < pixels.size(); ++i) image.data[i] = pixels[i] / 255.0;
  return image;
}

double lerp(double a, double b, double t) { return a + t * (b - a); }

// Bilinear sampling of the region [y0, y0+h) x [x0, x0+w) onto an
// out_h x out_w grid. Sample coordinates are clamped to the region, and the
// lerp form keeps constant regions exact.
ImageTensor sample_region(const ImageTensor& src, double y0, double x0, double h, double w,
                          std::size_t out_h, std::size_t out_w) {
  ImageTensor out(out_h, out_w, src.channels);
  const double sy = h / static_cast<double>(out_h);
  const double sx = w / static_cast<double>(out_w);
  const double y_max = std::min(y0 + h - 1.0, static_cast<double>(src.height - 1));
  const double x_max = std::min(x0 + w - 1.0, static_cast<double>(src.width - 1));
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp(y0 + (oy + 0.5) * sy - 0.5, y0, y_max);
    const auto iy = static_cast<std::size_t>(std::floor(fy));
    const std::size_t iy1 = std::min(iy + 1, src.height - 1);
    const double ty = fy - static_cast<double>(iy);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp(x0 + (ox + 0.5) * sx - 0.5, x0, x_max);
      const auto ix = static_cast<std::size_t>(std::floor(fx));
      const std::size_t ix1 = std::min(ix + 1, src.width - 1);
      const double tx = fx - static_cast<double>(ix);
      for (std::size_t c = 0; c < src.channels; ++c) {
        const double top = lerp(src.at(iy, ix, c), src.at(iy, ix1, c), tx);
        const double bottom = lerp(src.at(iy1, ix, c), src.at(iy1, ix1, c), tx);
        out.at(oy, ox, c) = lerp(top, bottom, ty);
      }
    }
  }
  return out;
}

}  // namespace

ImageTensor decode_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("image not found: " + path.string());
  switch (sniff(path)) {
    case FileKind::kPng:
      return decode_png(path);
    case FileKind::kJpeg:
      return decode_jpeg(path);
    default:
      throw FormatError("unsupported image format (expected PNG or JPEG): " + path.string());
  }
}

ImageTensor load_image(const std::filesystem::path& path, std::size_t size) {
  ImageTensor image = decode_image(path);
  if (size == 0 || (image.height == size && image.width == size)) return image;
  return resize_bilinear(image, size, size);
}

ImageTensor convert_channels(const ImageTensor& image, std::size_t channels) {
  require(channels == 1 || channels == 3, "convert_channels: channels must be 1 or 3");
  if (image.channels == channels) return image;
  ImageTensor out(image.height, image.width, channels);
  for (std::size_t p = 0; p < image.height * image.width; ++p) {
    if (channels == 3) {
      const double v = image.data[p * image.channels];
      out.data[p * 3] = out.data[p * 3 + 1] = out.data[p * 3 + 2] = v;
    } else {
      const double* px = image.data.data() + p * image.channels;
      out.data[p] = (px[0] + px[1] + px[2]) / 3.0;
    }
  }
  return out;
}

ImageTensor resize_bilinear(const ImageTensor& image, std::size_t height, std::size_t width) {
  require(image.height > 0 && image.width > 0 && height > 0 && width > 0,
          "resize_bilinear: empty image or target");
  return sample_region(image, 0.0, 0.0, static_cast<double>(image.height),
                       static_cast<double>(image.width), height, width);
}

std::uint8_t quantize_unit(double value) {
  const double v = std::clamp(value, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

void save_image(const ImageTensor& image, const std::filesystem::path& path) {
  require(image.channels == 1 || image.channels == 3, "save_image: channels must be 1 or 3");
  require(image.data.size() == image.height * image.width * image.channels,
          "save_image: data does not match dimensions");
  std::vector<png_byte> buffer(image.data.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] = quantize_unit(image.data[i]);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

void AugmentationPolicy::validate() const {
  require(crop_scale_min > 0.0 && crop_scale_max <= 1.0 && crop_scale_min <= crop_scale_max,
          "augmentation crop scale range must satisfy 0 < min <= max <= 1");
  require(flip_probability >= 0.0 && flip_probability <= 1.0,
          "augmentation flip probability must lie in [0,1]");
  require(jitter >= 0.0 && jitter < 1.0, "augmentation jitter must lie in [0,1)");
}

ImageTensor flip_horizontal(const ImageTensor& image) {
  ImageTensor out(image.height, image.width, image.channels);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c)
        out.at(y, x, c) = image.at(y, image.width - 1 - x, c);
  return out;
}

ImageTensor augment_view(const ImageTensor& image, const AugmentationPolicy& policy, Rng& rng) {
  policy.validate();
  require(image.height > 0 && image.width > 0, "augment_view: empty image");

  ImageTensor out;
  const double area = policy.crop_scale_min == policy.crop_scale_max
                          ? policy.crop_scale_min
                          : rng.uniform(policy.crop_scale_min, policy.crop_scale_max);
  const double side = std::sqrt(area);
  const auto crop_h = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(side * image.height)), 1, image.height);
  const auto crop_w = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(side * image.width)), 1, image.width);
  if (crop_h == image.height && crop_w == image.width) {
    out = image;
  } else {
    const std::size_t y0 = rng.index(image.height - crop_h + 1);
    const std::size_t x0 = rng.index(image.width - crop_w + 1);
    out = sample_region(image, static_cast<double>(y0), static_cast<double>(x0),
                        static_cast<double>(crop_h), static_cast<double>(crop_w), image.height,
                        image.width);
  }

  if (policy.flip_probability > 0.0 && rng.bernoulli(policy.flip_probability)) {
    out = flip_horizontal(out);
  }

  if (policy.jitter > 0.0) {
    const double brightness = rng.uniform(-policy.jitter, policy.jitter);
    const double contrast = rng.uniform(1.0 - policy.jitter, 1.0 + policy.jitter);
    double mean = 0.0;
    for (double v : out.data) mean += v;
    mean /= static_cast<double>(out.data.size());
    for (double& v : out.data) v = (v - mean) * contrast + mean + brightness;
  }
  for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace spmix
