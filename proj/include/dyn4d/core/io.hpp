#pragma once

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "dyn4d/core/error.hpp"
#include "dyn4d/core/image.hpp"

namespace dyn4d {

static_assert(std::endian::native == std::endian::little, "raw float32 I/O assumes a little-endian host");

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to `path.tmp` and renames over `path`, so readers never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Raw little-endian float32, row-major, exactly `count` values.
inline std::vector<float> read_f32(const std::filesystem::path& path, std::size_t count) {
  std::string bytes = read_file(path);
  if (bytes.size() != count * sizeof(float)) {
    throw ValidationError(path.filename().string() + ": expected " + std::to_string(count * sizeof(float)) +
                          " bytes of float32, found " + std::to_string(bytes.size()));
  }
  std::vector<float> out(count);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

template <typename T>
void write_f32(const std::filesystem::path& path, std::span<const T> values) {
  std::vector<float> f(values.begin(), values.end());
  write_file_atomic(path, std::string(reinterpret_cast<const char*>(f.data()), f.size() * sizeof(float)));
}

namespace detail {
struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace detail

/// Reads an 8-bit PNG. Palette and gray+alpha inputs are expanded; alpha is dropped.
/// Values are k/255 with no gamma transform.
inline Image<float> read_png(const std::filesystem::path& path, int want_channels) {
  detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw LoadError("cannot open image: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError("corrupt png: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (want_channels == 3 && (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)) {
    png_set_gray_to_rgb(png);
  }
  if (want_channels == 1 && (color & PNG_COLOR_MASK_COLOR)) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  std::vector<png_byte> buffer(static_cast<std::size_t>(width) * height * channels);
  std::vector<png_bytep> rows(height);
  for (int r = 0; r < height; ++r) rows[r] = buffer.data() + static_cast<std::size_t>(r) * width * channels;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Image<float> img(width, height, want_channels);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    for (int c = 0; c < want_channels; ++c) {
      img.data[p * want_channels + c] = static_cast<float>(buffer[p * channels + std::min(c, channels - 1)]) / 255.0f;
    }
  }
  return img;
}

/// Quantizes to 8 bits: clamp to [0,1], scale by 255, round half to even.
template <typename T>
std::uint8_t quantize_u8(T v) {
  const double x = std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::nearbyint(x));
}

/// Writes a 1- or 3-channel image as 8-bit PNG.
template <typename T>
void write_png(const std::filesystem::path& path, const Image<T>& img) {
  if (img.channels != 1 && img.channels != 3) throw ValidationError("write_png: expected 1 or 3 channels");
  auto tmp = path;
  tmp += ".tmp";
  {
    detail::FilePtr fp(std::fopen(tmp.string().c_str(), "wb"));
    if (!fp) throw Error("cannot write image: " + tmp.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw Error("png encode failed: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int r = 0; r < img.height; ++r) {
      for (int i = 0; i < img.width * img.channels; ++i) {
        row[i] = quantize_u8(img.data[static_cast<std::size_t>(r) * img.width * img.channels + i]);
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace dyn4d
