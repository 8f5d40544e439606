#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "dyn4d/core/error.hpp"
#include "dyn4d/core/math.hpp"

namespace dyn4d {

/// Stabilizer in the blended color denominator.
inline constexpr double kBlendEpsilon = 1e-6;
/// Stabilizer in the weight normalization (depth, normalized weights).
inline constexpr double kWeightEpsilon = 1e-6;

/// Samples along one ray: positions t (strictly increasing), interval lengths delta, and the
/// static/dynamic densities and colors evaluated at each position.
template <typename T>
struct RaySampleView {
  std::span<const T> t;
  std::span<const T> delta;
  std::span<const T> sigma_s;
  std::span<const T> sigma_d;
  std::span<const Vec3<T>> color_s;
  std::span<const Vec3<T>> color_d;

  std::size_t size() const { return t.size(); }
};

/// Owning version of `RaySampleView` for building single rays by hand.
template <typename T>
struct RaySampleBatch {
  std::vector<T> t, delta, sigma_s, sigma_d;
  std::vector<Vec3<T>> color_s, color_d;

  RaySampleView<T> view() const { return {t, delta, sigma_s, sigma_d, color_s, color_d}; }

  void validate() const {
    const std::size_t n = t.size();
    if (delta.size() != n || sigma_s.size() != n || sigma_d.size() != n || color_s.size() != n || color_d.size() != n) {
      throw ValidationError("ray samples: array lengths differ");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0 && !(t[i] > t[i - 1])) throw ValidationError("ray samples: t must be strictly increasing");
      if (!(delta[i] > T(0))) throw ValidationError("ray samples: delta must be positive");
      if (!(sigma_s[i] >= T(0)) || !(sigma_d[i] >= T(0))) throw ValidationError("ray samples: negative density");
    }
  }
};

/// Per-ray outputs of the blended estimator.
template <typename T>
struct BlendResult {
  Vec3<T> color = Vec3<T>::Zero();
  T depth = T(0);      // expectation of t under the normalized weights
  T opacity = T(0);    // sum of unnormalized weights
  T dyn_ratio = T(0);  // normalized-weight average of sigma_d / (sigma_s + sigma_d + eps)
};

/// Blended color of one sample: (sigma_s c_s + sigma_d c_d) / (sigma_s + sigma_d + eps).
template <typename T>
Vec3<T> blended_color(T sigma_s, T sigma_d, const Vec3<T>& cs, const Vec3<T>& cd) {
  return (sigma_s * cs + sigma_d * cd) / (sigma_s + sigma_d + T(kBlendEpsilon));
}

/// Single-pass blended volume rendering:
///   T_i = exp(-sum_{j<i} (sigma_s_j + sigma_d_j) delta_j)
///   w_i = T_i (1 - exp(-(sigma_s_i + sigma_d_i) delta_i))
///   C   = sum_i w_i c_i,   c_i = blended_color(...)
/// Writes unnormalized weights w_i and normalized weights w_i / (sum w + eps).
template <typename T>
BlendResult<T> blend_forward(const RaySampleView<T>& s, std::span<T> raw_weights, std::span<T> weights) {
  BlendResult<T> out;
  T optical = T(0);
  T weighted_t = T(0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const T sigma = s.sigma_s[i] + s.sigma_d[i];
    const T tau = sigma * s.delta[i];
    const T w = std::exp(-optical) * -std::expm1(-tau);
    optical += tau;
    raw_weights[i] = w;
    out.color += w * blended_color(s.sigma_s[i], s.sigma_d[i], s.color_s[i], s.color_d[i]);
    out.opacity += w;
    weighted_t += w * s.t[i];
  }
  const T denom = out.opacity + T(kWeightEpsilon);
  out.depth = weighted_t / denom;
  for (std::size_t i = 0; i < s.size(); ++i) {
    weights[i] = raw_weights[i] / denom;
    out.dyn_ratio += weights[i] * s.sigma_d[i] / (s.sigma_s[i] + s.sigma_d[i] + T(kBlendEpsilon));
  }
  return out;
}

/// Upstream gradients for one ray. `weights` (normalized) and `raw_weights` (unnormalized) may be empty.
template <typename T>
struct BlendGrad {
  Vec3<T> color = Vec3<T>::Zero();
  T depth = T(0);
  T opacity = T(0);
  T dyn_ratio = T(0);
  std::span<const T> weights;
  std::span<const T> raw_weights;
};

/// Reverse pass of `blend_forward`. Gradients are accumulated (+=) into the output spans.
template <typename T>
void blend_backward(const RaySampleView<T>& s, std::span<const T> raw_weights, const BlendResult<T>& fwd,
                    const BlendGrad<T>& g, std::span<T> d_sigma_s, std::span<T> d_sigma_d,
                    std::span<Vec3<T>> d_color_s, std::span<Vec3<T>> d_color_d) {
  const std::size_t n = s.size();
  const T denom = fwd.opacity + T(kWeightEpsilon);
  const T eps = T(kBlendEpsilon);
  const bool has_w = !g.weights.empty();

  // Gradient flowing into normalized weights: explicit part plus the dyn_ratio term.
  T norm_dot = T(0);  // sum_i g_wn_i * w_i (unnormalized)
  std::vector<T> g_raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T r = s.sigma_d[i] / (s.sigma_s[i] + s.sigma_d[i] + eps);
    const T g_wn = (has_w ? g.weights[i] : T(0)) + g.dyn_ratio * r;
    norm_dot += g_wn * raw_weights[i];
    const Vec3<T> c = blended_color(s.sigma_s[i], s.sigma_d[i], s.color_s[i], s.color_d[i]);
    g_raw[i] = g.color.dot(c) + g.opacity + g.depth * (s.t[i] - fwd.depth) / denom + g_wn / denom;
    if (!g.raw_weights.empty()) g_raw[i] += g.raw_weights[i];
  }
  for (std::size_t i = 0; i < n; ++i) g_raw[i] -= norm_dot / (denom * denom);

  // d w_i / d tau_k: T_k exp(-tau_k) for i == k, -w_i for i > k.
  T suffix = T(0);  // sum_{i>k} g_raw_i w_i
  T optical = T(0);
  std::vector<T> transmittance(n);
  for (std::size_t i = 0; i < n; ++i) {
    transmittance[i] = std::exp(-optical);
    optical += (s.sigma_s[i] + s.sigma_d[i]) * s.delta[i];
  }
  for (std::size_t k = n; k-- > 0;) {
    const T sigma = s.sigma_s[k] + s.sigma_d[k];
    const T tau = sigma * s.delta[k];
    const T d_tau = g_raw[k] * transmittance[k] * std::exp(-tau) - suffix;
    suffix += g_raw[k] * raw_weights[k];
    const T d_sigma = d_tau * s.delta[k];

    // Through the blended color and the dynamic ratio.
    const T den = sigma + eps;
    const Vec3<T> c = blended_color(s.sigma_s[k], s.sigma_d[k], s.color_s[k], s.color_d[k]);
    const Vec3<T> g_c = raw_weights[k] * g.color;
    const T g_r = g.dyn_ratio * raw_weights[k] / denom;
    d_sigma_s[k] += d_sigma + g_c.dot(s.color_s[k] - c) / den - g_r * s.sigma_d[k] / (den * den);
    d_sigma_d[k] += d_sigma + g_c.dot(s.color_d[k] - c) / den + g_r * (s.sigma_s[k] + eps) / (den * den);
    d_color_s[k] += g_c * (s.sigma_s[k] / den);
    d_color_d[k] += g_c * (s.sigma_d[k] / den);
  }
}

/// Convenience wrapper with owned outputs.
template <typename T>
struct RenderOutput {
  BlendResult<T> result;
  std::vector<T> raw_weights;
  std::vector<T> weights;
};

template <typename T>
RenderOutput<T> blend_render(const RaySampleView<T>& s) {
  RenderOutput<T> out;
  out.raw_weights.resize(s.size());
  out.weights.resize(s.size());
  out.result = blend_forward<T>(s, out.raw_weights, out.weights);
  return out;
}

}  // namespace dyn4d
