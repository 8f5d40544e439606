#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dyn4d/core/error.hpp"
#include "dyn4d/core/image.hpp"
#include "dyn4d/core/random.hpp"

namespace dyn4d {

/// Linear-beta DDPM schedule.
struct DiffusionSchedule {
  int n_steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 2e-2;

  double beta(int t) const {
    return n_steps == 1 ? beta_min : beta_min + (beta_max - beta_min) * static_cast<double>(t) / (n_steps - 1);
  }

  /// Cumulative product of (1 - beta_s) for s <= t; t is clamped to [0, n_steps - 1].
  double alpha_bar(int t) const {
    t = std::clamp(t, 0, n_steps - 1);
    double prod = 1.0;
    for (int s = 0; s <= t; ++s) prod *= 1.0 - beta(s);
    return prod;
  }

  void validate() const {
    if (n_steps < 1) throw ValidationError("schedule: n_steps must be positive");
    if (!(beta_min > 0.0) || !(beta_max < 1.0) || !(beta_min <= beta_max)) {
      throw ValidationError("schedule: need 0 < beta_min <= beta_max < 1");
    }
  }

  bool operator==(const DiffusionSchedule& o) const {
    return n_steps == o.n_steps && beta_min == o.beta_min && beta_max == o.beta_max;
  }

  friend void to_json(nlohmann::json& j, const DiffusionSchedule& s) {
    j = {{"n_steps", s.n_steps}, {"beta_min", s.beta_min}, {"beta_max", s.beta_max}};
  }
  friend void from_json(const nlohmann::json& j, DiffusionSchedule& s) {
    s.n_steps = j.value("n_steps", s.n_steps);
    s.beta_min = j.value("beta_min", s.beta_min);
    s.beta_max = j.value("beta_max", s.beta_max);
  }
};

/// Fractional diffusion time annealed linearly from t_start to t_end, as an index into the schedule.
inline int anneal_timestep(long iteration, long max_iterations, int n_steps = 1000, double t_start = 0.6,
                           double t_end = 0.2) {
  if (max_iterations <= 0 || iteration < 0 || iteration > max_iterations) {
    throw ValidationError("anneal_timestep: need 0 <= iteration <= max_iterations");
  }
  const double t = t_start + (t_end - t_start) * static_cast<double>(iteration) / static_cast<double>(max_iterations);
  return static_cast<int>(std::lround(t * n_steps));
}

/// Dense C x H x W float tensor (channel-major).
struct LatentTensor {
  int channels = 0, height = 0, width = 0;
  std::vector<float> data;

  LatentTensor() = default;
  LatentTensor(int c, int h, int w) : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w) {}

  std::size_t size() const { return data.size(); }
  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  bool same_shape(const LatentTensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  std::string shape_string() const {
    return "[" + std::to_string(channels) + "," + std::to_string(height) + "," + std::to_string(width) + "]";
  }
  bool operator==(const LatentTensor&) const = default;
};

/// eps_uncond + w (eps_cond - eps_uncond), evaluated as (1 - w) eps_uncond + w eps_cond so w = 0 and w = 1
/// return an input exactly.
inline LatentTensor apply_cfg(const LatentTensor& uncond, const LatentTensor& cond, double w) {
  if (!uncond.same_shape(cond)) {
    throw ValidationError("apply_cfg: shape mismatch " + uncond.shape_string() + " vs " + cond.shape_string());
  }
  LatentTensor out = uncond;
  const float wf = static_cast<float>(w);
  const float vf = static_cast<float>(1.0 - w);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = vf * uncond.data[i] + wf * cond.data[i];
  return out;
}

/// Predicts the noise in z_t at timestep t_index, guided with weight cfg_weight.
class ScoreProvider {
 public:
  virtual ~ScoreProvider() = default;
  virtual LatentTensor predict(const LatentTensor& z_t, int t_index, const std::string& condition,
                               double cfg_weight) = 0;
};

/// Provider assembled from separate unconditional / conditional predictors, combined with apply_cfg.
class GuidedProvider : public ScoreProvider {
 public:
  using Predictor = std::function<LatentTensor(const LatentTensor&, int, const std::string&)>;

  GuidedProvider(Predictor uncond, Predictor cond) : uncond_(std::move(uncond)), cond_(std::move(cond)) {}

  LatentTensor predict(const LatentTensor& z_t, int t_index, const std::string& condition,
                       double cfg_weight) override {
    const LatentTensor c = cond_(z_t, t_index, condition);
    if (cfg_weight == 1.0) return c;
    return apply_cfg(uncond_(z_t, t_index, {}), c, cfg_weight);
  }

 private:
  Predictor uncond_, cond_;
};

/// Exact denoiser for the point-mass data distribution at `mean`:
/// eps = (z_t - sqrt(abar_t) mean) / sqrt(1 - abar_t). Conditioning and guidance have no effect.
class AnalyticGaussianProvider : public ScoreProvider {
 public:
  AnalyticGaussianProvider(LatentTensor mean, DiffusionSchedule schedule)
      : mean_(std::move(mean)), schedule_(std::move(schedule)) {
    for (float v : mean_.data)
      if (!std::isfinite(v)) throw ValidationError("analytic provider: non-finite target mean");
  }

  void set_mean(LatentTensor mean) { mean_ = std::move(mean); }
  const LatentTensor& mean() const { return mean_; }

  LatentTensor predict(const LatentTensor& z_t, int t_index, const std::string&, double) override {
    if (!z_t.same_shape(mean_)) {
      throw ProtocolError("analytic provider: expected shape " + mean_.shape_string() + ", received " +
                          z_t.shape_string());
    }
    const double abar = schedule_.alpha_bar(t_index);
    const double sa = std::sqrt(abar), sn = std::sqrt(1.0 - abar);
    LatentTensor out(z_t.channels, z_t.height, z_t.width);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = static_cast<float>((z_t.data[i] - sa * mean_.data[i]) / sn);
    return out;
  }

 private:
  LatentTensor mean_;
  DiffusionSchedule schedule_;
};

/// RGB-D view handed to guidance: rgb (3 channels) and normalized disparity (1 channel), both in [0,1].
struct GuidanceView {
  Image<float> rgb;
  Image<float> disparity;

  void validate() const {
    if (rgb.channels != 3 || disparity.channels != 1 || rgb.width != disparity.width ||
        rgb.height != disparity.height) {
      throw ValidationError("guidance view: rgb/disparity shape mismatch");
    }
  }
};

/// Maps views to latents and pulls latent gradients back to view pixels.
class LatentCodec {
 public:
  virtual ~LatentCodec() = default;
  virtual LatentTensor encode(const GuidanceView& view) const = 0;
  virtual GuidanceView decode(const LatentTensor& z) const = 0;
  /// Vector-Jacobian product of `encode` at `view`.
  virtual GuidanceView pullback(const GuidanceView& view, const LatentTensor& d_latent) const = 0;
};

/// Packs RGB-D into a 4 x H x W latent unchanged.
class IdentityCodec : public LatentCodec {
 public:
  LatentTensor encode(const GuidanceView& view) const override {
    view.validate();
    LatentTensor z(4, view.rgb.height, view.rgb.width);
    for (int y = 0; y < z.height; ++y)
      for (int x = 0; x < z.width; ++x) {
        for (int c = 0; c < 3; ++c) z.at(c, y, x) = view.rgb(y, x, c);
        z.at(3, y, x) = view.disparity(y, x);
      }
    return z;
  }

  GuidanceView decode(const LatentTensor& z) const override {
    if (z.channels != 4) throw ValidationError("identity codec: expected 4 channels, got " + std::to_string(z.channels));
    GuidanceView v{Image<float>(z.width, z.height, 3), Image<float>(z.width, z.height, 1)};
    for (int y = 0; y < z.height; ++y)
      for (int x = 0; x < z.width; ++x) {
        for (int c = 0; c < 3; ++c) v.rgb(y, x, c) = z.at(c, y, x);
        v.disparity(y, x) = z.at(3, y, x);
      }
    return v;
  }

  GuidanceView pullback(const GuidanceView&, const LatentTensor& d_latent) const override { return decode(d_latent); }
};

struct SdsResult {
  GuidanceView grad;        // d L_sds / d view pixels (omega = 1)
  double residual_sq = 0.0;  // mean of (eps_hat - eps)^2
};

/// Score-distillation gradient at one timestep: z = encode(view), z_t = sqrt(abar) z + sqrt(1 - abar) eps,
/// gradient = pullback(eps_hat - eps). The provider is treated as a constant.
inline SdsResult sds_gradient(const GuidanceView& view, const LatentCodec& codec, ScoreProvider& provider,
                              const DiffusionSchedule& schedule, int t_index, Rng& rng, double cfg_weight = 7.5,
                              const std::string& condition = {}) {
  if (t_index < 0 || t_index >= schedule.n_steps) throw ValidationError("sds_gradient: t_index out of range");
  const LatentTensor z = codec.encode(view);
  const double abar = schedule.alpha_bar(t_index);
  const double sa = std::sqrt(abar), sn = std::sqrt(1.0 - abar);
  LatentTensor eps(z.channels, z.height, z.width), z_t(z.channels, z.height, z.width);
  for (std::size_t i = 0; i < z.size(); ++i) {
    eps.data[i] = static_cast<float>(standard_normal(rng));
    z_t.data[i] = static_cast<float>(sa * z.data[i] + sn * eps.data[i]);
  }
  const LatentTensor eps_hat = provider.predict(z_t, t_index, condition, cfg_weight);
  if (!eps_hat.same_shape(z)) {
    throw ProtocolError("score provider: expected shape " + z.shape_string() + ", received " + eps_hat.shape_string());
  }
  LatentTensor residual(z.channels, z.height, z.width);
  double sq = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    residual.data[i] = eps_hat.data[i] - eps.data[i];
    sq += static_cast<double>(residual.data[i]) * residual.data[i];
  }
  return {codec.pullback(view, residual), z.size() ? sq / static_cast<double>(z.size()) : 0.0};
}

}  // namespace dyn4d
