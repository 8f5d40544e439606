#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace dyn4d {

/// Dense interleaved image, row-major, `channels` values per pixel.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T(0))
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t index(int row, int col, int ch = 0) const {
    assert(row >= 0 && row < height && col >= 0 && col < width && ch >= 0 && ch < channels);
    return (static_cast<std::size_t>(row) * width + col) * channels + ch;
  }
  T& operator()(int row, int col, int ch = 0) { return data[index(row, col, ch)]; }
  const T& operator()(int row, int col, int ch = 0) const { return data[index(row, col, ch)]; }

  std::span<T> pixel(int row, int col) { return {data.data() + index(row, col), static_cast<std::size_t>(channels)}; }
  std::span<const T> pixel(int row, int col) const {
    return {data.data() + index(row, col), static_cast<std::size_t>(channels)};
  }

  bool same_shape(const Image& other) const {
    return width == other.width && height == other.height && channels == other.channels;
  }

  template <typename U>
  Image<U> cast() const {
    Image<U> out;
    out.width = width;
    out.height = height;
    out.channels = channels;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

using Mask = Image<unsigned char>;

}  // namespace dyn4d
