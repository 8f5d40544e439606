#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "dyn4d/core/error.hpp"

namespace dyn4d {

/// Mean absolute difference over all elements. Writes d loss / d rendered when `d_rendered` is non-empty.
template <typename T>
T rgb_loss(std::span<const T> rendered, std::span<const T> reference, std::span<T> d_rendered = {}) {
  if (rendered.size() != reference.size()) throw ValidationError("rgb_loss: shape mismatch");
  if (rendered.empty()) return T(0);
  const T inv_n = T(1) / static_cast<T>(rendered.size());
  T sum = T(0);
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const T e = rendered[i] - reference[i];
    sum += std::abs(e);
    if (!d_rendered.empty()) d_rendered[i] = e > T(0) ? inv_n : (e < T(0) ? -inv_n : T(0));
  }
  return sum * inv_n;
}

template <typename T>
struct DepthLossResult {
  T value = T(0);
  T scale = T(0);  // a in a * ref + b
  T shift = T(0);  // b
  std::size_t valid = 0;
  bool degenerate = false;  // fewer than 2 valid pixels or constant reference
};

/// Affine-invariant depth loss: least-squares (a, b) minimizing sum (a ref + b - rendered)^2 over
/// valid pixels, then mean |a ref + b - rendered|. (a, b) are held constant in the gradient.
template <typename T>
DepthLossResult<T> depth_loss(std::span<const T> rendered, std::span<const T> reference,
                              std::span<const std::uint8_t> valid, std::span<T> d_rendered = {}) {
  if (rendered.size() != reference.size() || rendered.size() != valid.size()) {
    throw ValidationError("depth_loss: shape mismatch");
  }
  DepthLossResult<T> out;
  if (!d_rendered.empty()) std::fill(d_rendered.begin(), d_rendered.end(), T(0));
  // Fit in long double so an exactly affine pair gives a loss of exactly zero.
  using A = long double;
  A mean_ref = 0, mean_ren = 0;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    if (!valid[i]) continue;
    ++out.valid;
    mean_ref += reference[i];
    mean_ren += rendered[i];
  }
  if (out.valid < 2) {
    out.degenerate = true;
    return out;
  }
  const A na = static_cast<A>(out.valid);
  mean_ref /= na;
  mean_ren /= na;
  A var = 0, cov = 0;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    if (!valid[i]) continue;
    const A dr = reference[i] - mean_ref;
    var += dr * dr;
    cov += dr * (rendered[i] - mean_ren);
  }
  // Relative to the reference magnitude so a constant reference with rounding noise still counts.
  if (!(var > A(1e-12) * na * std::max(A(1), mean_ref * mean_ref))) {
    out.degenerate = true;
    return out;
  }
  const A scale = cov / var;
  out.scale = static_cast<T>(scale);
  out.shift = static_cast<T>(mean_ren - scale * mean_ref);
  const T n = static_cast<T>(out.valid);
  T sum = T(0);
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    if (!valid[i]) continue;
    const T e = out.scale * reference[i] + out.shift - rendered[i];
    sum += std::abs(e);
    if (!d_rendered.empty()) d_rendered[i] = e > T(0) ? -T(1) / n : (e < T(0) ? T(1) / n : T(0));
  }
  out.value = sum / n;
  return out;
}

/// Per-ray weighted depth variance sum_i (z_i - mu)^2 w_i / (sum_j w_j + 1e-6) with unnormalized
/// weights w. Gradients (accumulated) w.r.t. the weights and mu.
template <typename T>
T z_variance(std::span<const T> w, std::span<const T> z, T mu, std::span<T> d_w = {}, T* d_mu = nullptr,
             T upstream = T(1)) {
  T total = T(0);
  for (T v : w) total += v;
  const T denom = total + T(1e-6);
  T sq = T(0), lin = T(0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const T e = z[i] - mu;
    sq += e * e * w[i];
    lin += e * w[i];
  }
  const T value = sq / denom;
  if (!d_w.empty()) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T e = z[i] - mu;
      d_w[i] += upstream * (e * e - value) / denom;
    }
  }
  if (d_mu) *d_mu += upstream * T(-2) * lin / denom;
  return value;
}

/// Skewed binary entropy of one sample: x = (sigma_d / (sigma_s + sigma_d + 1e-6))^2,
/// H = -(x ln x + (1 - x) ln(1 - x)), with 0 ln 0 = 0.
template <typename T>
T skewed_entropy(T sigma_s, T sigma_d, T* d_sigma_s = nullptr, T* d_sigma_d = nullptr, T upstream = T(1)) {
  const T den = sigma_s + sigma_d + T(1e-6);
  const T r = sigma_d / den;
  const T x = r * r;
  auto xlogx = [](T v) { return v > T(0) ? v * std::log(v) : T(0); };
  const T h = -(xlogx(x) + xlogx(T(1) - x));
  if (d_sigma_s || d_sigma_d) {
    const T lo = std::max(T(1e-12), std::numeric_limits<T>::epsilon());
    const T xc = std::clamp(x, lo, T(1) - lo);
    const T dh_dx = std::log((T(1) - xc) / xc);
    const T dh_dr = upstream * dh_dx * T(2) * r;
    if (d_sigma_s) *d_sigma_s += dh_dr * (-sigma_d / (den * den));
    if (d_sigma_d) *d_sigma_d += dh_dr * ((sigma_s + T(1e-6)) / (den * den));
  }
  return h;
}

/// Mean skewed entropy over samples; gradients accumulated.
template <typename T>
T decomposition_loss(std::span<const T> sigma_s, std::span<const T> sigma_d, std::span<T> d_sigma_s = {},
                     std::span<T> d_sigma_d = {}) {
  if (sigma_s.size() != sigma_d.size()) throw ValidationError("decomposition_loss: shape mismatch");
  if (sigma_s.empty()) return T(0);
  const T inv_n = T(1) / static_cast<T>(sigma_s.size());
  const bool grad = !d_sigma_s.empty();
  T sum = T(0);
  for (std::size_t i = 0; i < sigma_s.size(); ++i) {
    sum += skewed_entropy<T>(sigma_s[i], sigma_d[i], grad ? &d_sigma_s[i] : nullptr, grad ? &d_sigma_d[i] : nullptr,
                             inv_n);
  }
  return sum * inv_n;
}

/// Proposal supervision for one ray. Fine sample i covers [t_i, t_{i+1}) (the last one ends at
/// edges.back()); its bound is the proposal mass of every bin overlapping that interval. Returns
/// sum_i max(0, w_i - bound_i)^2 and accumulates the gradient w.r.t. the proposal weights.
template <typename T>
T proposal_loss(std::span<const T> edges, std::span<const T> prop_weights, std::span<const T> fine_t,
                std::span<const T> fine_weights, std::span<T> d_prop_weights = {}, T upstream = T(1)) {
  const std::size_t bins = prop_weights.size();
  std::vector<T> cum(bins + 1, T(0));
  for (std::size_t k = 0; k < bins; ++k) cum[k + 1] = cum[k] + prop_weights[k];
  T loss = T(0);
  for (std::size_t i = 0; i < fine_t.size(); ++i) {
    const T a = fine_t[i];
    const T b = i + 1 < fine_t.size() ? fine_t[i + 1] : edges[bins];
    // First bin with upper edge > a, one past the last bin with lower edge < b.
    const std::size_t lo = static_cast<std::size_t>(std::upper_bound(edges.begin() + 1, edges.end(), a) -
                                                    (edges.begin() + 1));
    const std::size_t hi = static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end() - 1, b) -
                                                    edges.begin());
    const std::size_t l = std::min(lo, bins), h = std::max(std::min(hi, bins), l);
    const T bound = cum[h] - cum[l];
    const T excess = fine_weights[i] - bound;
    if (excess <= T(0)) continue;
    loss += excess * excess;
    if (!d_prop_weights.empty()) {
      for (std::size_t k = l; k < h; ++k) d_prop_weights[k] += upstream * T(-2) * excess;
    }
  }
  return loss;
}

}  // namespace dyn4d
