#pragma once

#include <algorithm>
#include <cmath>

#include "dyn4d/core/error.hpp"
#include "dyn4d/core/image.hpp"

namespace dyn4d {

/// Square window [row0, row0 + size) x [col0, col0 + size).
struct CropWindow {
  int row0 = 0;
  int col0 = 0;
  int size = 0;
};

template <typename T>
Image<T> crop(const Image<T>& img, const CropWindow& w) {
  if (w.row0 < 0 || w.col0 < 0 || w.row0 + w.size > img.height || w.col0 + w.size > img.width) {
    throw ValidationError("crop window outside image");
  }
  Image<T> out(w.size, w.size, img.channels);
  for (int r = 0; r < w.size; ++r)
    for (int c = 0; c < w.size; ++c)
      for (int k = 0; k < img.channels; ++k) out(r, c, k) = img(w.row0 + r, w.col0 + c, k);
  return out;
}

/// Adjoint of `crop`: scatters into a zero image of the original size.
template <typename T>
Image<T> crop_adjoint(const Image<T>& grad, const CropWindow& w, int width, int height) {
  Image<T> out(width, height, grad.channels);
  for (int r = 0; r < w.size; ++r)
    for (int c = 0; c < w.size; ++c)
      for (int k = 0; k < grad.channels; ++k) out(w.row0 + r, w.col0 + c, k) = grad(r, c, k);
  return out;
}

namespace detail {
struct Tap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};
/// Half-pixel-center bilinear taps along one axis.
inline Tap bilinear_tap(int dst, int dst_size, int src_size) {
  const double scale = static_cast<double>(src_size) / dst_size;
  double x = (dst + 0.5) * scale - 0.5;
  x = std::clamp(x, 0.0, static_cast<double>(src_size - 1));
  const int i0 = static_cast<int>(std::floor(x));
  const int i1 = std::min(i0 + 1, src_size - 1);
  return {i0, i1, x - i0};
}
}  // namespace detail

template <typename T>
Image<T> resize_bilinear(const Image<T>& img, int width, int height) {
  Image<T> out(width, height, img.channels);
  for (int r = 0; r < height; ++r) {
    const auto ty = detail::bilinear_tap(r, height, img.height);
    for (int c = 0; c < width; ++c) {
      const auto tx = detail::bilinear_tap(c, width, img.width);
      for (int k = 0; k < img.channels; ++k) {
        const T top = img(ty.i0, tx.i0, k) * T(1 - tx.w1) + img(ty.i0, tx.i1, k) * T(tx.w1);
        const T bot = img(ty.i1, tx.i0, k) * T(1 - tx.w1) + img(ty.i1, tx.i1, k) * T(tx.w1);
        out(r, c, k) = top * T(1 - ty.w1) + bot * T(ty.w1);
      }
    }
  }
  return out;
}

/// Transpose of `resize_bilinear` (maps output-space gradients to input space).
template <typename T>
Image<T> resize_bilinear_adjoint(const Image<T>& grad, int src_width, int src_height) {
  Image<T> out(src_width, src_height, grad.channels);
  for (int r = 0; r < grad.height; ++r) {
    const auto ty = detail::bilinear_tap(r, grad.height, src_height);
    for (int c = 0; c < grad.width; ++c) {
      const auto tx = detail::bilinear_tap(c, grad.width, src_width);
      for (int k = 0; k < grad.channels; ++k) {
        const T g = grad(r, c, k);
        out(ty.i0, tx.i0, k) += g * T((1 - ty.w1) * (1 - tx.w1));
        out(ty.i0, tx.i1, k) += g * T((1 - ty.w1) * tx.w1);
        out(ty.i1, tx.i0, k) += g * T(ty.w1 * (1 - tx.w1));
        out(ty.i1, tx.i1, k) += g * T(ty.w1 * tx.w1);
      }
    }
  }
  return out;
}

}  // namespace dyn4d
