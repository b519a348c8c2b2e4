// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "unirender/common.hpp"
#include "unirender/pbr.hpp"

namespace unirender {

/// 8-bit interleaved image (1 or 3 channels).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<uint8_t> pixels;
};

namespace detail {
struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace detail

inline void WritePng(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw DataError("WritePng: only gray or RGB images are supported");
  detail::FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed writing PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, img.width, img.height, 8, img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const size_t stride = static_cast<size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Reads any PNG and converts it to 8-bit RGB.
inline Image8 ReadPngRgb(const std::filesystem::path& path) {
  detail::FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng initialization failed");
  }
  Image8 img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("failed reading PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = 3;
  img.pixels.resize(static_cast<size_t>(img.width) * img.height * 3);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + static_cast<size_t>(y) * img.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline uint8_t Quantize(double v) { return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

/// Linear radiance preview: clamp, gamma 2.2, 8 bit.
inline Image8 PreviewImage(const PlanarImage& linear) {
  Image8 img{linear.width, linear.height, linear.channels == 1 ? 1 : 3, {}};
  img.pixels.resize(linear.pixels() * img.channels);
  for (size_t p = 0; p < linear.pixels(); ++p)
    for (int c = 0; c < img.channels; ++c) img.pixels[p * img.channels + c] = Quantize(ToDisplay(linear.at(c, p)));
  return img;
}

/// Data map export without gamma: value -> (value * scale + offset).
inline Image8 DataImage(const PlanarImage& map, double scale = 1.0, double offset = 0.0) {
  Image8 img{map.width, map.height, map.channels == 1 ? 1 : 3, {}};
  img.pixels.resize(map.pixels() * img.channels);
  for (size_t p = 0; p < map.pixels(); ++p)
    for (int c = 0; c < img.channels; ++c) img.pixels[p * img.channels + c] = Quantize(map.at(c, p) * scale + offset);
  return img;
}

/// Inverse of PreviewImage for radiance in [0, 1].
inline PlanarImage LinearFromPreview(const Image8& img) {
  PlanarImage out(img.width, img.height, 3);
  for (size_t p = 0; p < out.pixels(); ++p)
    for (int c = 0; c < 3; ++c) out.at(c, p) = static_cast<float>(std::pow(img.pixels[p * 3 + c] / 255.0, 2.2));
  return out;
}

/// Tiles equally sized images into a cols-wide contact sheet.
inline Image8 ContactSheet(const std::vector<Image8>& tiles, int cols) {
  if (tiles.empty()) return {};
  const int tw = tiles[0].width, th = tiles[0].height;
  const int rows = (static_cast<int>(tiles.size()) + cols - 1) / cols;
  Image8 sheet{tw * cols, th * rows, 3, {}};
  sheet.pixels.assign(static_cast<size_t>(sheet.width) * sheet.height * 3, 0);
  for (size_t k = 0; k < tiles.size(); ++k) {
    const Image8& t = tiles[k];
    const int ox = static_cast<int>(k % cols) * tw, oy = static_cast<int>(k / cols) * th;
    for (int y = 0; y < th; ++y)
      for (int x = 0; x < tw; ++x)
        for (int c = 0; c < 3; ++c) {
          const int src_c = t.channels == 1 ? 0 : c;
          sheet.pixels[((static_cast<size_t>(oy + y) * sheet.width) + ox + x) * 3 + c] =
              t.pixels[(static_cast<size_t>(y) * tw + x) * t.channels + src_c];
        }
  }
  return sheet;
}

}  // namespace unirender
