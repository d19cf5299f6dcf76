// Copyright 2026 The partkd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Minimal dependency-free raster output: a 24-bit BMP writer, a 5x7 bitmap
// font for labels, and the grid layout used by the matrix heatmap.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "partkd/common.hpp"

namespace partkd {

struct Rgb {
  std::uint8_t r = 255, g = 255, b = 255;
};

class Image {
 public:
  Image(int width, int height, Rgb fill = {})
      : width_(width), height_(height),
        pixels_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {}

  int width() const { return width_; }
  int height() const { return height_; }

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
    pixels_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)] = c;
  }

  void fill_rect(int x0, int y0, int w, int h, Rgb c) {
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) set(x, y, c);
  }

  // Row-padded bottom-up BGR, the plain 24-bit BMP layout.
  void save_bmp(const std::string& path) const {
    const int row_bytes = (width_ * 3 + 3) / 4 * 4;
    const std::uint32_t data_size = static_cast<std::uint32_t>(row_bytes) *
                                    static_cast<std::uint32_t>(height_);
    const std::uint32_t file_size = 54 + data_size;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IOError("cannot write image: " + path);

    auto put16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
    auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    out.write("BM", 2);
    put32(file_size);
    put32(0);
    put32(54);  // pixel data offset
    put32(40);  // BITMAPINFOHEADER
    put32(static_cast<std::uint32_t>(width_));
    put32(static_cast<std::uint32_t>(height_));
    put16(1);
    put16(24);
    put32(0);
    put32(data_size);
    put32(2835);
    put32(2835);
    put32(0);
    put32(0);

    std::vector<char> row(static_cast<std::size_t>(row_bytes), 0);
    for (int y = height_ - 1; y >= 0; --y) {
      for (int x = 0; x < width_; ++x) {
        const Rgb& p = pixels_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                               static_cast<std::size_t>(x)];
        row[static_cast<std::size_t>(x * 3 + 0)] = static_cast<char>(p.b);
        row[static_cast<std::size_t>(x * 3 + 1)] = static_cast<char>(p.g);
        row[static_cast<std::size_t>(x * 3 + 2)] = static_cast<char>(p.r);
      }
      out.write(row.data(), row_bytes);
    }
    if (!out) throw IOError("image write failure: " + path);
  }

 private:
  int width_, height_;
  std::vector<Rgb> pixels_;
};

namespace detail {

// Column-encoded 5x7 glyphs (bit 0 = top row) for A-Z, 0-9, '-', '_'.
inline const std::uint8_t* glyph5x7(char ch) {
  static const std::uint8_t letters[26][5] = {
      {0x7E, 0x11, 0x11, 0x11, 0x7E}, {0x7F, 0x49, 0x49, 0x49, 0x36},
      {0x3E, 0x41, 0x41, 0x41, 0x22}, {0x7F, 0x41, 0x41, 0x22, 0x1C},
      {0x7F, 0x49, 0x49, 0x49, 0x41}, {0x7F, 0x09, 0x09, 0x09, 0x01},
      {0x3E, 0x41, 0x49, 0x49, 0x7A}, {0x7F, 0x08, 0x08, 0x08, 0x7F},
      {0x00, 0x41, 0x7F, 0x41, 0x00}, {0x20, 0x40, 0x41, 0x3F, 0x01},
      {0x7F, 0x08, 0x14, 0x22, 0x41}, {0x7F, 0x40, 0x40, 0x40, 0x40},
      {0x7F, 0x02, 0x0C, 0x02, 0x7F}, {0x7F, 0x04, 0x08, 0x10, 0x7F},
      {0x3E, 0x41, 0x41, 0x41, 0x3E}, {0x7F, 0x09, 0x09, 0x09, 0x06},
      {0x3E, 0x41, 0x51, 0x21, 0x5E}, {0x7F, 0x09, 0x19, 0x29, 0x46},
      {0x46, 0x49, 0x49, 0x49, 0x31}, {0x01, 0x01, 0x7F, 0x01, 0x01},
      {0x3F, 0x40, 0x40, 0x40, 0x3F}, {0x1F, 0x20, 0x40, 0x20, 0x1F},
      {0x3F, 0x40, 0x38, 0x40, 0x3F}, {0x63, 0x14, 0x08, 0x14, 0x63},
      {0x07, 0x08, 0x70, 0x08, 0x07}, {0x61, 0x51, 0x49, 0x45, 0x43}};
  static const std::uint8_t digits[10][5] = {
      {0x3E, 0x51, 0x49, 0x45, 0x3E}, {0x00, 0x42, 0x7F, 0x40, 0x00},
      {0x42, 0x61, 0x51, 0x49, 0x46}, {0x21, 0x41, 0x45, 0x4B, 0x31},
      {0x18, 0x14, 0x12, 0x7F, 0x10}, {0x27, 0x45, 0x45, 0x45, 0x39},
      {0x3C, 0x4A, 0x49, 0x49, 0x30}, {0x01, 0x71, 0x09, 0x05, 0x03},
      {0x36, 0x49, 0x49, 0x49, 0x36}, {0x06, 0x49, 0x49, 0x29, 0x1E}};
  static const std::uint8_t dash[5] = {0x08, 0x08, 0x08, 0x08, 0x08};
  static const std::uint8_t underscore[5] = {0x40, 0x40, 0x40, 0x40, 0x40};
  static const std::uint8_t blank[5] = {0, 0, 0, 0, 0};
  const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  if (up >= 'A' && up <= 'Z') return letters[up - 'A'];
  if (up >= '0' && up <= '9') return digits[up - '0'];
  if (up == '-') return dash;
  if (up == '_') return underscore;
  return blank;
}

}  // namespace detail

inline constexpr int kGlyphAdvance = 6;  // 5 pixel columns + 1 spacing

inline void draw_text(Image& img, int x, int y, const std::string& text, Rgb color) {
  for (char ch : text) {
    const std::uint8_t* glyph = detail::glyph5x7(ch);
    for (int col = 0; col < 5; ++col)
      for (int row = 0; row < 7; ++row)
        if (glyph[col] & (1u << row)) img.set(x + col, y + row, color);
    x += kGlyphAdvance;
  }
}

// Light-to-dark-blue ramp; t in [0,1], large values dark.
inline Rgb heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto lerp = [t](double a, double b) { return static_cast<std::uint8_t>(a + (b - a) * t + 0.5); };
  return {lerp(247, 8), lerp(251, 48), lerp(255, 107)};
}

struct HeatmapLayout {
  int cell_w = 46;
  int cell_h = 24;
  int gap = 2;
  int top_gutter = 14;
  int left_gutter = 0;  // computed from the longest row label

  int width(int cols) const { return left_gutter + cols * (cell_w + gap) + gap; }
  int height(int rows) const { return top_gutter + rows * (cell_h + gap) + gap; }
};

inline HeatmapLayout heatmap_layout(const std::vector<std::string>& row_labels) {
  HeatmapLayout layout;
  std::size_t longest = 0;
  for (const auto& l : row_labels) longest = std::max(longest, l.size());
  layout.left_gutter = static_cast<int>(longest) * kGlyphAdvance + 8;
  return layout;
}

}  // namespace partkd
