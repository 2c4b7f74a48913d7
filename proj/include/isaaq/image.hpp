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

#pragma once

#include <filesystem>
#include <vector>

namespace isaaq {

// Grayscale raster, values in [0,1], row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  double at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
  double& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
};

Image make_image(int width, int height, double fill = 1.0);

// Decodes any PNG color type to grayscale (luma, alpha composited on white).
Image load_png_gray(const std::filesystem::path& file);

// 8-bit grayscale PNG.
void save_png_gray(const std::filesystem::path& file, const Image& image);

// Pixel crop of the normalized box [x1,y1,x2,y2]; clamps to bounds and always
// returns at least one pixel.
Image crop(const Image& image, double x1, double y1, double x2, double y2);

}  // namespace isaaq
