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


#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "doctest.h"
#include "oracles.hpp"
#include "spmix/error.hpp"
#include "spmix/image.hpp"
#include "spmix/saliency.hpp"

using namespace spmix;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "spmix_unit_image";
  fs::create_directories(dir);
  return dir / name;
}

// Writes raw 8-bit pixels with libpng directly, independent of save_image.
void write_png(const fs::path& path, std::size_t w, std::size_t h, bool gray,
               const std::vector<unsigned char>& pixels) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(w);
  png.height = static_cast<png_uint_32>(h);
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  REQUIRE(png_image_write_to_file(&png, path.c_str(), 0, pixels.data(), 0, nullptr));
}

std::vector<unsigned char> read_png_bytes(const fs::path& path, bool gray) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  REQUIRE(png_image_begin_read_from_file(&png, path.c_str()));
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<unsigned char> out(PNG_IMAGE_SIZE(png));
  REQUIRE(png_image_finish_read(&png, nullptr, out.data(), 0, nullptr));
  return out;
}

void write_jpeg(const fs::path& path, std::size_t w, std::size_t h) {
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  FILE* f = std::fopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  jpeg_stdio_dest(&cinfo, f);
  cinfo.image_width = static_cast<JDIMENSION>(w);
  cinfo.image_height = static_cast<JDIMENSION>(h);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, 90, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  std::vector<unsigned char> row(w * 3);
  while (cinfo.next_scanline < cinfo.image_height) {
    for (std::size_t x = 0; x < w; ++x) {
      row[x * 3] = static_cast<unsigned char>(x % 256);
      row[x * 3 + 1] = static_cast<unsigned char>(cinfo.next_scanline % 256);
      row[x * 3 + 2] = 128;
    }
    JSAMPROW ptr = row.data();
    jpeg_write_scanlines(&cinfo, &ptr, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(f);
}

}  // namespace

TEST_SUITE("image") {

TEST_CASE("all-white 2x2 PNG loads as ones after resize") {
  const fs::path path = scratch("white.png");
  write_png(path, 2, 2, false, std::vector<unsigned char>(12, 255));
  ImageTensor image = load_image(path, 8);
  CHECK(image.height == 8);
  CHECK(image.width == 8);
  CHECK(image.channels == 3);
  for (double v : image.data) CHECK(v == 1.0);
}

TEST_CASE("JPEG decodes to the unit range") {
  const fs::path path = scratch("ramp.jpg");
  write_jpeg(path, 224, 224);
  ImageTensor image = load_image(path, 224);
  CHECK(image.height == 224);
  CHECK(image.width == 224);
  CHECK(image.channels == 3);
  CHECK(image.in_unit_range());
  // Blue plane is flat 128; lossy coding keeps it close.
  CHECK(std::abs(image.at(100, 100, 2) - 128.0 / 255.0) < 0.05);
}

TEST_CASE("gray PNG keeps one channel and duplicates to three") {
  const fs::path path = scratch("gray.png");
  const std::vector<unsigned char> bytes{0, 64, 200, 255};
  write_png(path, 2, 2, true, bytes);
  ImageTensor gray = decode_image(path);
  REQUIRE(gray.channels == 1);
  ImageTensor rgb = convert_channels(gray, 3);
  REQUIRE(rgb.channels == 3);
  for (std::size_t p = 0; p < 4; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(rgb.data[p * 3 + c] == static_cast<double>(bytes[p]) / 255.0);
    }
  }
}

TEST_CASE("save/load round-trip stays within one quantization step") {
  Rng rng(3);
  ImageTensor image = oracle::random_image(7, 5, 3, rng);
  const fs::path path = scratch("roundtrip.png");
  save_image(image, path);
  ImageTensor back = decode_image(path);
  REQUIRE(back.same_shape(image));
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    CHECK(std::abs(back.data[i] - image.data[i]) <= 1.0 / 255.0);
  }
}

TEST_CASE("saliency maps quantize with round-half-up") {
  SaliencyMap half(3, 3, 0.5);
  half.normalized = true;
  save_saliency(half, scratch("half.png"));
  for (unsigned char b : read_png_bytes(scratch("half.png"), true)) CHECK(b == 128);
  SaliencyMap one(2, 2, 1.0);
  one.normalized = true;
  save_saliency(one, scratch("one.png"));
  for (unsigned char b : read_png_bytes(scratch("one.png"), true)) CHECK(b == 255);
  CHECK(quantize_unit(0.5) == 128);
  CHECK(quantize_unit(-3.0) == 0);
  CHECK(quantize_unit(2.0) == 255);
}

TEST_CASE("load errors") {
  CHECK_THROWS_AS(load_image(scratch("nope.png"), 0), IoError);
  {
    std::ofstream(scratch("text.png")) << "not an image at all";
  }
  CHECK_THROWS_AS(load_image(scratch("text.png"), 0), FormatError);
  {
    std::ofstream out(scratch("broken.png"), std::ios::binary);
    const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.write(reinterpret_cast<const char*>(sig), 8);
    out << "garbage";
  }
  CHECK_THROWS_AS(load_image(scratch("broken.png"), 0), IoError);
  CHECK_THROWS_AS(save_image(ImageTensor(2, 2, 3), scratch("missing_dir/x.png")), IoError);
}

TEST_CASE("resize of a constant image is constant") {
  ImageTensor image(5, 7, 3, 0.3);
  ImageTensor out = resize_bilinear(image, 11, 4);
  for (double v : out.data) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("disabled policy is the identity") {
  Rng data(1);
  ImageTensor image = oracle::random_image(8, 8, 3, data);
  Rng rng(2);
  CHECK(augment_view(image, AugmentationPolicy::identity(), rng).data == image.data);
}

TEST_CASE("flip probability one reverses columns") {
  ImageTensor image(2, 2, 1);
  image.data = {0.1, 0.2, 0.3, 0.4};
  AugmentationPolicy policy = AugmentationPolicy::identity();
  policy.flip_probability = 1.0;
  Rng rng(4);
  CHECK(augment_view(image, policy, rng).data == std::vector<double>{0.2, 0.1, 0.4, 0.3});
}

TEST_CASE("augmentation is deterministic and stays in range") {
  Rng data(5);
  ImageTensor image = oracle::random_image(16, 16, 3, data);
  AugmentationPolicy policy;
  Rng a(9), b(9);
  ImageTensor va = augment_view(image, policy, a);
  ImageTensor vb = augment_view(image, policy, b);
  CHECK(va.data == vb.data);
  CHECK(va.same_shape(image));
  CHECK(va.in_unit_range());
}

TEST_CASE("invalid policies are rejected") {
  AugmentationPolicy policy;
  policy.crop_scale_min = 0.0;
  Rng rng(0);
  CHECK_THROWS_AS(augment_view(ImageTensor(4, 4, 3), policy, rng), ContractViolation);
  policy = AugmentationPolicy{};
  policy.flip_probability = 1.5;
  CHECK_THROWS_AS(augment_view(ImageTensor(4, 4, 3), policy, rng), ContractViolation);
}

}  // TEST_SUITE
