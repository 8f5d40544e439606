#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "json.hpp"

#include "dyn4d/core/error.hpp"

namespace dyn4d {

/// Loss weights and their decay schedule. The rgb and depth weights decay exponentially from
/// `*_start` to `*_end` over `*_decay_steps` iterations and stay at `*_end` afterwards.
struct LossSchedule {
  double rgb_start = 1.0;
  double rgb_end = 0.1;
  int rgb_decay_steps = 7000;
  double depth_start = 0.1;
  double depth_end = 0.01;
  int depth_decay_steps = 2000;
  double zvar = 0.1;
  double decomp = 1e-4;
  double sds = 1.0;
  double prop = 1.0;

  void validate() const {
    for (double v : {rgb_start, rgb_end, depth_start, depth_end, zvar, decomp, sds, prop}) {
      if (!(v >= 0.0)) throw ValidationError("loss weights must be non-negative");
    }
    if (rgb_decay_steps < 0 || depth_decay_steps < 0) throw ValidationError("decay steps must be non-negative");
  }

  NLOHMANN_DEFINE_TYPE_INTRUSIVE_WITH_DEFAULT(LossSchedule, rgb_start, rgb_end, rgb_decay_steps, depth_start,
                                              depth_end, depth_decay_steps, zvar, decomp, sds, prop)
};

struct LossWeights {
  double rgb = 0.0;
  double depth = 0.0;
  double zvar = 0.0;
  double decomp = 0.0;
  double sds = 0.0;
  double prop = 0.0;
};

inline double decay_weight(double start, double end, int steps, long iteration) {
  if (steps <= 0 || iteration >= steps) return end;
  if (start <= 0.0 || end <= 0.0) return start + (end - start) * static_cast<double>(iteration) / steps;
  return start * std::pow(end / start, static_cast<double>(std::max(0L, iteration)) / steps);
}

inline LossWeights schedule_weights(long iteration, const LossSchedule& s = {}) {
  if (iteration < 0) throw ValidationError("iteration must be non-negative");
  LossWeights w;
  w.rgb = decay_weight(s.rgb_start, s.rgb_end, s.rgb_decay_steps, iteration);
  w.depth = decay_weight(s.depth_start, s.depth_end, s.depth_decay_steps, iteration);
  w.zvar = s.zvar;
  w.decomp = s.decomp;
  w.sds = s.sds;
  w.prop = s.prop;
  return w;
}

/// Per-iteration loss values. `total` is the weighted sum in the order listed.
struct LossReport {
  long iter = 0;
  double rgb = 0.0, depth = 0.0, zvar = 0.0, decomp = 0.0, sds = 0.0, prop = 0.0;
  double total = 0.0;
  LossWeights weights;
  bool depth_degenerate = false;

  double weighted_total() const {
    return weights.rgb * rgb + weights.depth * depth + weights.zvar * zvar + weights.decomp * decomp +
           weights.sds * sds + weights.prop * prop;
  }

  /// Name of the first non-finite term, or empty.
  std::string non_finite_term() const {
    const std::pair<const char*, double> terms[] = {{"rgb", rgb},       {"depth", depth}, {"zvar", zvar},
                                                    {"decomp", decomp}, {"sds", sds},     {"prop", prop}};
    for (const auto& [name, v] : terms)
      if (!std::isfinite(v)) return name;
    return {};
  }

  nlohmann::json to_json() const {
    return {{"iter", iter},
            {"rgb", rgb},
            {"depth", depth},
            {"zvar", zvar},
            {"decomp", decomp},
            {"sds", sds},
            {"prop", prop},
            {"total", total},
            {"lambda_rgb", weights.rgb},
            {"lambda_depth", weights.depth},
            {"lambda_zvar", weights.zvar},
            {"lambda_decomp", weights.decomp},
            {"lambda_sds", weights.sds},
            {"lambda_prop", weights.prop},
            {"depth_degenerate", depth_degenerate}};
  }
};

}  // namespace dyn4d
