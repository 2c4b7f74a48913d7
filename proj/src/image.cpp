/*
 * Copyright 2026 The isaaq Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "isaaq/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "isaaq/error.hpp"

namespace isaaq {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image make_image(int width, int height, double fill) {
  Image im;
  im.width = width;
  im.height = height;
  im.pixels.assign(static_cast<size_t>(width) * height, fill);
  return im;
}

Image load_png_gray(const std::filesystem::path& file) {
  FilePtr fp(std::fopen(file.string().c_str(), "rb"));
  if (!fp) throw Error(ErrorCode::io, "cannot open image " + file.string());

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw Error(ErrorCode::io, "not a PNG file: " + file.string());
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::internal, "libpng init failed");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<png_byte> data;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::io, "corrupt PNG: " + file.string());
  }

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_expand(png);  // palette -> rgb, gray<8 -> 8, tRNS -> alpha
  png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_set_add_alpha(png, 0xFF, PNG_FILLER_AFTER);
  png_read_update_info(png, info);

  int width = static_cast<int>(png_get_image_width(png, info));
  int height = static_cast<int>(png_get_image_height(png, info));
  size_t stride = png_get_rowbytes(png, info);
  data.resize(stride * static_cast<size_t>(height));
  row_ptrs.resize(static_cast<size_t>(height));
  for (int y = 0; y < height; ++y) row_ptrs[static_cast<size_t>(y)] = data.data() + stride * y;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image im = make_image(width, height, 1.0);
  for (int y = 0; y < height; ++y) {
    const png_byte* row = data.data() + stride * y;
    for (int x = 0; x < width; ++x) {
      double r = row[4 * x + 0] / 255.0;
      double g = row[4 * x + 1] / 255.0;
      double b = row[4 * x + 2] / 255.0;
      double a = row[4 * x + 3] / 255.0;
      double luma = 0.299 * r + 0.587 * g + 0.114 * b;
      im.at(x, y) = luma * a + (1.0 - a);  // composite on white
    }
  }
  return im;
}

void save_png_gray(const std::filesystem::path& file, const Image& image) {
  if (image.width <= 0 || image.height <= 0) {
    throw Error(ErrorCode::config, "cannot save an empty image");
  }
  FilePtr fp(std::fopen(file.string().c_str(), "wb"));
  if (!fp) throw Error(ErrorCode::io, "cannot write image " + file.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::internal, "libpng init failed");
  }
  std::vector<png_byte> row(static_cast<size_t>(image.width));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::io, "PNG write failed: " + file.string());
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      double v = std::clamp(image.at(x, y), 0.0, 1.0);
      row[static_cast<size_t>(x)] = static_cast<png_byte>(std::lround(v * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image crop(const Image& image, double x1, double y1, double x2, double y2) {
  int px1 = std::clamp(static_cast<int>(std::floor(x1 * image.width)), 0, image.width - 1);
  int py1 = std::clamp(static_cast<int>(std::floor(y1 * image.height)), 0, image.height - 1);
  int px2 = std::clamp(static_cast<int>(std::ceil(x2 * image.width)), px1 + 1, image.width);
  int py2 = std::clamp(static_cast<int>(std::ceil(y2 * image.height)), py1 + 1, image.height);
  Image out = make_image(px2 - px1, py2 - py1, 1.0);
  for (int y = py1; y < py2; ++y) {
    for (int x = px1; x < px2; ++x) out.at(x - px1, y - py1) = image.at(x, y);
  }
  return out;
}

}  // namespace isaaq
