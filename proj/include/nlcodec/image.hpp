// Copyright 2026 The nlcodec Authors.
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

#include <png.h>

#include <csetjmp>
#include <cstdio>

#include "nlcodec/serialize.hpp"

namespace nlc {

// RGB image, planar (channel, row, col), values in [0, 1]. 8-bit on disk.
struct Image {
  int c = 3, h = 0, w = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h_, int w_) : h(h_), w(w_), data(static_cast<size_t>(3) * h_ * w_, 0.0) {}
  double& at(int ch, int y, int x) {
    return data[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  double at(int ch, int y, int x) const {
    return data[(static_cast<size_t>(ch) * h + y) * w + x];
  }
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline Image image_from_rgb8(const std::vector<uint8_t>& rgb, int h, int w) {
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        img.at(ch, y, x) = rgb[(static_cast<size_t>(y) * w + x) * 3 + ch] / 255.0;
  return img;
}

inline std::vector<uint8_t> rgb8_from_image(const Image& img) {
  std::vector<uint8_t> rgb(static_cast<size_t>(img.h) * img.w * 3);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        double v = std::min(1.0, std::max(0.0, img.at(ch, y, x)));
        rgb[(static_cast<size_t>(y) * img.w + x) * 3 + ch] =
            static_cast<uint8_t>(std::lround(v * 255.0));
      }
  return rgb;
}

inline Image read_png(std::FILE* f, const std::string& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw io_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw io_error("libpng init failed");
  }
  std::vector<uint8_t> rgb;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw format_error("corrupt PNG: " + path);
  }
  png_init_io(png, f);
  png_read_info(png, info);
  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<size_t>(w) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw format_error("unsupported PNG layout: " + path);
  }
  rgb.resize(static_cast<size_t>(w) * h * 3);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = rgb.data() + static_cast<size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image_from_rgb8(rgb, static_cast<int>(h), static_cast<int>(w));
}

inline void write_png(const std::string& path, const Image& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw io_error("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw io_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw io_error("libpng init failed");
  }
  std::vector<uint8_t> rgb = rgb8_from_image(img);
  std::vector<png_bytep> rows(static_cast<size_t>(img.h));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw io_error("PNG write failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  for (int y = 0; y < img.h; ++y)
    rows[static_cast<size_t>(y)] = rgb.data() + static_cast<size_t>(y) * img.w * 3;
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Binary PPM (P6), maxval 255 only.
inline Image read_ppm(std::FILE* f, const std::string& path) {
  auto next_token = [&]() -> std::string {
    std::string tok;
    int ch;
    while ((ch = std::fgetc(f)) != EOF) {
      if (ch == '#') {
        while ((ch = std::fgetc(f)) != EOF && ch != '\n') {
        }
        continue;
      }
      if (std::isspace(ch)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) throw format_error("truncated PPM header: " + path);
    return tok;
  };
  if (next_token() != "P6") throw format_error("not a binary PPM: " + path);
  int w = std::stoi(next_token());
  int h = std::stoi(next_token());
  int maxval = std::stoi(next_token());
  if (w <= 0 || h <= 0) throw format_error("bad PPM dimensions: " + path);
  if (maxval != 255) throw format_error("PPM maxval must be 255: " + path);
  std::vector<uint8_t> rgb(static_cast<size_t>(w) * h * 3);
  if (std::fread(rgb.data(), 1, rgb.size(), f) != rgb.size())
    throw format_error("truncated PPM payload: " + path);
  return image_from_rgb8(rgb, h, w);
}

inline void write_ppm(const std::string& path, const Image& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw io_error("cannot open for writing: " + path);
  std::string header = "P6\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
  std::vector<uint8_t> rgb = rgb8_from_image(img);
  if (std::fwrite(header.data(), 1, header.size(), f.get()) != header.size() ||
      std::fwrite(rgb.data(), 1, rgb.size(), f.get()) != rgb.size())
    throw io_error("PPM write failed: " + path);
}

}  // namespace detail

// Sniffs the payload (PNG signature / "P6") rather than trusting extensions.
inline Image read_image(const std::string& path) {
  detail::FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw io_error("cannot open: " + path);
  uint8_t sig[8] = {0};
  size_t got = std::fread(sig, 1, 8, f.get());
  std::rewind(f.get());
  if (got >= 8 && png_sig_cmp(sig, 0, 8) == 0) return detail::read_png(f.get(), path);
  if (got >= 2 && sig[0] == 'P' && sig[1] == '6') return detail::read_ppm(f.get(), path);
  throw format_error("unrecognized image format (PNG or binary PPM expected): " + path);
}

inline void write_image(const std::string& path, const Image& img) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  for (char& ch : ext) ch = static_cast<char>(std::tolower(ch));
  if (ext == ".png")
    detail::write_png(path, img);
  else if (ext == ".ppm")
    detail::write_ppm(path, img);
  else
    throw usage_error("unsupported output extension (use .png or .ppm): " + path);
}

inline Tensor image_to_tensor(const Image& img) {
  Tensor t({1, 3, img.h, img.w});
  std::copy(img.data.begin(), img.data.end(), t.data.begin());
  return t;
}

inline Image tensor_to_image(const Tensor& t) {
  check_rank("tensor_to_image", t, 4);
  if (t.shape[0] != 1 || t.shape[1] != 3)
    throw dim_error("tensor_to_image: expected {1,3,H,W}, got " + shape_str(t.shape));
  Image img(t.shape[2], t.shape[3]);
  std::copy(t.data.begin(), t.data.end(), img.data.begin());
  return img;
}

}  // namespace nlc
