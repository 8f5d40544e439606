#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "dyn4d/core/error.hpp"
#include "dyn4d/core/image.hpp"

namespace dyn4d {

inline constexpr double kPsnrCap = 99.0;

namespace detail {
inline void check_metric_inputs(int aw, int ah, int ac, int bw, int bh, int bc, const Mask* mask) {
  if (aw != bw || ah != bh || ac != bc) throw ValidationError("metric: image shapes differ");
  if (mask && (mask->width != aw || mask->height != ah)) throw ValidationError("metric: mask shape differs");
}
}  // namespace detail

/// PSNR over mask-valid pixels (all channels), peak 1. Identical images give kPsnrCap.
/// Returns nullopt when no pixel is valid.
template <typename T>
std::optional<double> masked_psnr(const Image<T>& a, const Image<T>& b, const Mask* mask = nullptr) {
  detail::check_metric_inputs(a.width, a.height, a.channels, b.width, b.height, b.channels, mask);
  double sq = 0.0;
  std::size_t n = 0;
  for (int r = 0; r < a.height; ++r)
    for (int c = 0; c < a.width; ++c) {
      if (mask && !(*mask)(r, c)) continue;
      for (int k = 0; k < a.channels; ++k) {
        const double e = static_cast<double>(a(r, c, k)) - static_cast<double>(b(r, c, k));
        sq += e * e;
        ++n;
      }
    }
  if (n == 0) return std::nullopt;
  const double mse = sq / static_cast<double>(n);
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

/// Normalized 11-tap Gaussian, sigma 1.5.
inline std::array<double, 11> ssim_kernel() {
  std::array<double, 11> k{};
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    k[i] = std::exp(-0.5 * (i - 5) * (i - 5) / (1.5 * 1.5));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

/// Mean SSIM (Gaussian 11x11 window, sigma 1.5, K1 0.01, K2 0.03, data range 1) over window
/// centers that lie fully inside the image and are mask-valid; averaged over channels.
/// Returns nullopt when no window center is valid.
template <typename T>
std::optional<double> masked_ssim(const Image<T>& a, const Image<T>& b, const Mask* mask = nullptr) {
  detail::check_metric_inputs(a.width, a.height, a.channels, b.width, b.height, b.channels, mask);
  constexpr int R = 5;
  if (a.width < 2 * R + 1 || a.height < 2 * R + 1) throw ValidationError("ssim: image smaller than 11x11");
  const auto kern = ssim_kernel();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int W = a.width, H = a.height;
  const int ow = W - 2 * R, oh = H - 2 * R;

  std::vector<char> valid(static_cast<std::size_t>(ow) * oh, 1);
  std::size_t n_valid = valid.size();
  if (mask) {
    n_valid = 0;
    for (int r = 0; r < oh; ++r)
      for (int c = 0; c < ow; ++c) n_valid += (valid[r * ow + c] = (*mask)(r + R, c + R) ? 1 : 0);
  }
  if (n_valid == 0) return std::nullopt;

  // Five planes filtered separably: x, y, xx, yy, xy.
  std::vector<double> planes(5 * static_cast<std::size_t>(W) * H), rows(5 * static_cast<std::size_t>(W) * oh),
      out(5 * static_cast<std::size_t>(ow) * oh);
  double total = 0.0;
  for (int ch = 0; ch < a.channels; ++ch) {
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        const double x = a(r, c, ch), y = b(r, c, ch);
        const std::size_t i = static_cast<std::size_t>(r) * W + c, s = static_cast<std::size_t>(W) * H;
        planes[i] = x;
        planes[s + i] = y;
        planes[2 * s + i] = x * x;
        planes[3 * s + i] = y * y;
        planes[4 * s + i] = x * y;
      }
    for (int p = 0; p < 5; ++p) {
      const double* src = planes.data() + static_cast<std::size_t>(p) * W * H;
      double* dst = rows.data() + static_cast<std::size_t>(p) * W * oh;
      for (int r = 0; r < oh; ++r)
        for (int c = 0; c < W; ++c) {
          double acc = 0.0;
          for (int k = 0; k <= 2 * R; ++k) acc += kern[k] * src[static_cast<std::size_t>(r + k) * W + c];
          dst[static_cast<std::size_t>(r) * W + c] = acc;
        }
      double* fin = out.data() + static_cast<std::size_t>(p) * ow * oh;
      for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
          double acc = 0.0;
          for (int k = 0; k <= 2 * R; ++k) acc += kern[k] * dst[static_cast<std::size_t>(r) * W + c + k];
          fin[static_cast<std::size_t>(r) * ow + c] = acc;
        }
    }
    const std::size_t s = static_cast<std::size_t>(ow) * oh;
    double sum = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      if (!valid[i]) continue;
      const double mx = out[i], my = out[s + i];
      const double vx = out[2 * s + i] - mx * mx, vy = out[3 * s + i] - my * my, cxy = out[4 * s + i] - mx * my;
      sum += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    total += sum / static_cast<double>(n_valid);
  }
  return total / a.channels;
}

}  // namespace dyn4d
