#pragma once

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "sigscat/errors.hpp"
#include "sigscat/tensor.hpp"

namespace sigscat {

/// Decoded 8-bit raster, RGB interleaved.
struct RgbImage {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> rgb;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open '" + path + "'");
  return f;
}

inline RgbImage decode_png(const std::string& path) {
  auto file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed for '" + path + "'");
  png_infop info = png_create_info_struct(png);
  RgbImage img;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> rgba;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG '" + path + "'");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_add_alpha(png, 0xFF, PNG_FILLER_AFTER);
  png_read_update_info(png, info);
  rgba.resize(static_cast<std::size_t>(width) * height * 4);
  rows.resize(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = rgba.data() + y * width * 4;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  img.height = height;
  img.width = width;
  img.rgb.resize(static_cast<std::size_t>(width) * height * 3);
  // Transparent pixels are composited over a white page.
  for (std::size_t i = 0; i < static_cast<std::size_t>(width) * height; ++i) {
    const double a = rgba[4 * i + 3] / 255.0;
    for (int ch = 0; ch < 3; ++ch) {
      const double v = rgba[4 * i + ch] * a + 255.0 * (1.0 - a);
      img.rgb[3 * i + ch] = static_cast<std::uint8_t>(std::lround(v));
    }
  }
  return img;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

inline RgbImage decode_jpeg(const std::string& path) {
  auto file = open_file(path, "rb");
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = [](j_common_ptr c) {
    std::longjmp(reinterpret_cast<JpegError*>(c->err)->jump, 1);
  };
  RgbImage img;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("corrupt JPEG '" + path + "'");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  img.width = cinfo.output_width;
  img.height = cinfo.output_height;
  img.rgb.resize(img.width * img.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * img.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

}  // namespace detail

/// Decodes PNG or JPEG, detected from the file signature.
inline RgbImage decode_image(const std::string& path) {
  auto file = detail::open_file(path, "rb");
  unsigned char sig[8] = {};
  const auto n = std::fread(sig, 1, sizeof sig, file.get());
  file.reset();
  RgbImage img;
  if (n >= 8 && png_sig_cmp(sig, 0, 8) == 0) img = detail::decode_png(path);
  else if (n >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) img = detail::decode_jpeg(path);
  else throw IoError("unsupported or corrupt image '" + path + "'");
  if (img.width == 0 || img.height == 0) throw IoError("zero-extent image '" + path + "'");
  return img;
}

/// Luma 0.299 R + 0.587 G + 0.114 B, still on the 0..255 scale.
inline Tensor<double> to_grayscale(const RgbImage& img) {
  if (img.width == 0 || img.height == 0) throw ShapeError("cannot convert a zero-extent image");
  Tensor<double> g(Shape{img.height, img.width});
  for (std::size_t i = 0; i < img.width * img.height; ++i) {
    g[i] = 0.299 * img.rgb[3 * i] + 0.587 * img.rgb[3 * i + 1] + 0.114 * img.rgb[3 * i + 2];
  }
  return g;
}

/// Bilinear resampling with pixel-center alignment: destination pixel d maps
/// to source coordinate (d + 0.5) * in/out - 0.5, clamped to the edge. No
/// aspect-ratio preservation.
inline Tensor<double> resize_bilinear(const Tensor<double>& src, std::size_t out_h, std::size_t out_w) {
  const std::size_t H = src.dim(0), W = src.dim(1);
  Tensor<double> dst(Shape{out_h, out_w});
  auto coord = [](std::size_t d, std::size_t in, std::size_t out, std::size_t& i0, std::size_t& i1,
                  double& frac) {
    double s = (static_cast<double>(d) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    i0 = static_cast<std::size_t>(std::floor(s));
    i1 = std::min(i0 + 1, in - 1);
    frac = s - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double fy;
    coord(y, H, out_h, y0, y1, fy);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double fx;
      coord(x, W, out_w, x0, x1, fx);
      const double top = src[y0 * W + x0] * (1 - fx) + src[y0 * W + x1] * fx;
      const double bot = src[y1 * W + x0] * (1 - fx) + src[y1 * W + x1] * fx;
      dst[y * out_w + x] = top * (1 - fy) + bot * fy;
    }
  }
  return dst;
}

/// Ingestion pipeline: grayscale -> bilinear resize -> scale to [0, 1].
inline Tensor<float> preprocess(const RgbImage& img, std::size_t out_h = 180, std::size_t out_w = 300) {
  const Tensor<double> resized = resize_bilinear(to_grayscale(img), out_h, out_w);
  Tensor<float> out(resized.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(std::clamp(resized[i] / 255.0, 0.0, 1.0));
  }
  return out;
}

inline Tensor<float> load_image(const std::string& path, std::size_t out_h = 180, std::size_t out_w = 300) {
  return preprocess(decode_image(path), out_h, out_w);
}

/// Writes an 8-bit grayscale PNG; values in [0, 1] are rounded to 0..255.
inline void write_png_gray(const std::string& path, const Tensor<float>& image) {
  if (image.rank() != 2) throw ShapeError("write_png_gray expects a 2D image");
  auto file = detail::open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed for '" + path + "'");
  png_infop info = png_create_info_struct(png);
  const std::size_t H = image.dim(0), W = image.dim(1);
  std::vector<std::uint8_t> bytes(H * W);
  for (std::size_t i = 0; i < H * W; ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image[i], 0.0f, 1.0f) * 255.0f));
  }
  std::vector<png_bytep> rows(H);
  for (std::size_t y = 0; y < H; ++y) rows[y] = bytes.data() + y * W;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed for '" + path + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Writes an 8-bit RGB PNG (used by tests to build fixtures).
inline void write_png_rgb(const std::string& path, const RgbImage& img) {
  auto file = detail::open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed for '" + path + "'");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(img.height);
  auto* base = const_cast<std::uint8_t*>(img.rgb.data());
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = base + y * img.width * 3;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed for '" + path + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace sigscat
