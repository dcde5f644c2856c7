#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "rgbdface/error.hpp"
#include "rgbdface/nn/tensor.hpp"

namespace rgbdface::dataio {

struct DecodedImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;  // interleaved, row-major
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void png_error_fn(png_structp, png_const_charp msg) { throw LoadError(std::string("libpng: ") + msg); }
inline void png_warning_fn(png_structp, png_const_charp) {}

// Row buffers are prepared by the caller; this only drives libpng.
inline void write_png_rows(const std::string& path, int width, int height, int color_type, int bit_depth,
                           std::vector<png_bytep>& rows) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  require<std::runtime_error>(static_cast<bool>(fp), "cannot open ", path, " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  try {
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

inline std::uint16_t quantize(double v, int max) {
  return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * max));
}

}  // namespace detail

// (3, H, W) tensor in [0, 1] -> 8-bit RGB PNG.
inline void write_rgb_png(const std::string& path, const nn::Tensor& rgb) {
  const int H = rgb.dim(1), W = rgb.dim(2);
  std::vector<png_byte> buf(static_cast<std::size_t>(H) * W * 3);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      for (int c = 0; c < 3; ++c)
        buf[(static_cast<std::size_t>(i) * W + j) * 3 + c] =
            static_cast<png_byte>(detail::quantize(rgb[(static_cast<std::size_t>(c) * H + i) * W + j], 255));
  std::vector<png_bytep> rows(H);
  for (int i = 0; i < H; ++i) rows[i] = buf.data() + static_cast<std::size_t>(i) * W * 3;
  detail::write_png_rows(path, W, H, PNG_COLOR_TYPE_RGB, 8, rows);
}

// (1, H, W) tensor in [0, 1] -> 8- or 16-bit grayscale PNG.
inline void write_depth_png(const std::string& path, const nn::Tensor& depth, int bit_depth = 8) {
  require<PreconditionError>(bit_depth == 8 || bit_depth == 16, "depth bit depth must be 8 or 16");
  const int H = depth.dim(1), W = depth.dim(2);
  const int bytes = bit_depth / 8;
  std::vector<png_byte> buf(static_cast<std::size_t>(H) * W * bytes);
  for (std::size_t k = 0; k < static_cast<std::size_t>(H) * W; ++k) {
    const std::uint16_t q = detail::quantize(depth[k], bit_depth == 8 ? 255 : 65535);
    if (bytes == 1) {
      buf[k] = static_cast<png_byte>(q);
    } else {  // PNG stores 16-bit samples big-endian
      buf[2 * k] = static_cast<png_byte>(q >> 8);
      buf[2 * k + 1] = static_cast<png_byte>(q & 0xFF);
    }
  }
  std::vector<png_bytep> rows(H);
  for (int i = 0; i < H; ++i) rows[i] = buf.data() + static_cast<std::size_t>(i) * W * bytes;
  detail::write_png_rows(path, W, H, PNG_COLOR_TYPE_GRAY, bit_depth, rows);
}

inline DecodedImage read_png(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  require<LoadError>(static_cast<bool>(fp), "cannot open image ", path);
  png_byte sig[8];
  require<LoadError>(std::fread(sig, 1, 8, fp.get()) == 8 && png_sig_cmp(sig, 0, 8) == 0, path,
                     " is not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn,
                                           detail::png_warning_fn);
  png_infop info = png_create_info_struct(png);
  DecodedImage img;
  try {
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.bit_depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_RGB)
      img.channels = 3;
    else if (color == PNG_COLOR_TYPE_GRAY)
      img.channels = 1;
    else
      throw LoadError(path + ": unsupported PNG color type (need RGB or grayscale)");
    if (img.bit_depth != 8 && img.bit_depth != 16)
      throw LoadError(path + ": unsupported bit depth " + std::to_string(img.bit_depth));
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<png_byte> buf(rowbytes * img.height);
    std::vector<png_bytep> rows(img.height);
    for (int i = 0; i < img.height; ++i) rows[i] = buf.data() + i * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
    img.samples.resize(n);
    for (std::size_t k = 0; k < n; ++k)
      img.samples[k] = img.bit_depth == 8 ? buf[k] : static_cast<std::uint16_t>((buf[2 * k] << 8) | buf[2 * k + 1]);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace rgbdface::dataio
