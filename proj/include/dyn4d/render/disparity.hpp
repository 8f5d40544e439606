#pragma once

#include <algorithm>
#include <vector>

#include "dyn4d/core/error.hpp"
#include "dyn4d/core/image.hpp"
#include "dyn4d/core/math.hpp"

namespace dyn4d {

template <typename T>
struct NormalizedDisparity {
  Image<T> disparity;  // in [0,1]; 0 on invalid pixels
  Mask valid;
  T d_min = T(0);  // 5th percentile of 1/depth over valid pixels
  T d_max = T(0);  // 95th percentile
};

/// Reciprocal of depth on pixels with opacity above `opacity_threshold`, rescaled by the robust
/// range [p5, p95] to (d - d_min) / (d_max - d_min + 1e-6) and clamped to [0,1].
template <typename T>
NormalizedDisparity<T> depth_to_normalized_disparity(const Image<T>& depth, const Image<T>& opacity,
                                                     T opacity_threshold = T(0.5)) {
  if (depth.channels != 1 || !depth.same_shape(opacity)) throw ValidationError("depth/opacity shape mismatch");
  NormalizedDisparity<T> out{Image<T>(depth.width, depth.height, 1), Mask(depth.width, depth.height, 1)};
  std::vector<T> values;
  values.reserve(depth.data.size());
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    if (opacity.data[i] > opacity_threshold && depth.data[i] > T(0)) {
      out.valid.data[i] = 1;
      values.push_back(T(1) / depth.data[i]);
    }
  }
  if (values.empty()) throw RenderError("empty depth");
  out.d_min = percentile<T>(values, 5.0);
  out.d_max = percentile<T>(values, 95.0);
  const T scale = T(1) / (out.d_max - out.d_min + T(1e-6));
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    if (out.valid.data[i]) out.disparity.data[i] = std::clamp((T(1) / depth.data[i] - out.d_min) * scale, T(0), T(1));
  }
  return out;
}

/// Gradient w.r.t. depth, treating the percentile bounds as constants. Clamped and invalid
/// pixels pass no gradient.
template <typename T>
Image<T> normalized_disparity_backward(const Image<T>& depth, const NormalizedDisparity<T>& fwd, const Image<T>& d_out) {
  Image<T> d_depth(depth.width, depth.height, 1);
  const T scale = T(1) / (fwd.d_max - fwd.d_min + T(1e-6));
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    if (!fwd.valid.data[i]) continue;
    const T raw = (T(1) / depth.data[i] - fwd.d_min) * scale;
    if (raw <= T(0) || raw >= T(1)) continue;
    d_depth.data[i] = -d_out.data[i] * scale / (depth.data[i] * depth.data[i]);
  }
  return d_depth;
}

}  // namespace dyn4d
