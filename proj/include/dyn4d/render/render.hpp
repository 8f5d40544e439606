#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dyn4d/core/image.hpp"
#include "dyn4d/core/parallel.hpp"
#include "dyn4d/core/random.hpp"
#include "dyn4d/data/rays.hpp"
#include "dyn4d/fields/scene_model.hpp"
#include "dyn4d/render/blend.hpp"
#include "dyn4d/render/sampling.hpp"

namespace dyn4d {

/// Everything produced while rendering a set of rays at one timestamp. Proposal arrays hold
/// `n_proposal` entries per hit ray (edges hold n_proposal + 1); fine arrays hold `n_fine`.
template <typename T>
struct RenderBatch {
  std::vector<Ray> rays;
  T time = T(0);
  int n_proposal = 0;
  int n_fine = 0;
  std::vector<std::int32_t> slot;  // per ray: index among hit rays, or -1
  std::vector<std::size_t> hit;    // per hit slot: ray index

  std::vector<T> prop_edges, prop_t, prop_sigma, prop_weights;
  std::vector<T> t, delta, sigma_s, sigma_d, raw_weights, weights;
  std::vector<Vec3<T>> color_s, color_d;
  std::vector<BlendResult<T>> outputs;  // per ray; zero for misses

  bool has_field_cache = false;
  typename StaticField<T>::Cache static_cache;
  typename DynamicField<T>::Cache dynamic_cache;
  bool has_proposal_cache = false;
  typename ProposalField<T>::Cache proposal_cache;

  std::size_t hit_count() const { return hit.size(); }
  std::size_t sample_count() const { return t.size(); }

  RaySampleView<T> samples(std::size_t s) const {
    const std::size_t o = s * n_fine, n = n_fine;
    return {std::span(t).subspan(o, n),           std::span(delta).subspan(o, n),
            std::span(sigma_s).subspan(o, n),     std::span(sigma_d).subspan(o, n),
            std::span(color_s).subspan(o, n),     std::span(color_d).subspan(o, n)};
  }
  std::span<const T> prop_edges_of(std::size_t s) const {
    return std::span(prop_edges).subspan(s * (n_proposal + 1), n_proposal + 1);
  }
  std::span<const T> prop_weights_of(std::size_t s) const {
    return std::span(prop_weights).subspan(s * n_proposal, n_proposal);
  }
  std::span<const T> raw_weights_of(std::size_t s) const { return std::span(raw_weights).subspan(s * n_fine, n_fine); }
  std::span<const T> weights_of(std::size_t s) const { return std::span(weights).subspan(s * n_fine, n_fine); }
};

struct RenderOptions {
  SamplerConfig sampler;
  bool keep_field_cache = false;     // needed for render_backward without recomputation
  bool keep_proposal_cache = false;  // needed for proposal_backward
  std::size_t eval_chunk = 1 << 15;  // fine samples per field evaluation when no cache is kept
};

namespace detail {

template <typename T>
std::vector<Vec3<T>> unit_points(const SceneModel<T>& model, const RenderBatch<T>& b, std::span<const T> ts,
                                 int per_ray, std::size_t first_slot, std::size_t n_slots) {
  std::vector<Vec3<T>> pts(n_slots * per_ray);
  for (std::size_t s = 0; s < n_slots; ++s) {
    const Ray& ray = b.rays[b.hit[first_slot + s]];
    for (int k = 0; k < per_ray; ++k) {
      const double tk = static_cast<double>(ts[(first_slot + s) * per_ray + k]);
      pts[s * per_ray + k] = model.normalize(ray.origin + tk * ray.direction);
    }
  }
  return pts;
}

template <typename T>
void store_fields(RenderBatch<T>& b, std::size_t offset, const DensityColor<T>& st, const DensityColor<T>& dy) {
  for (Eigen::Index i = 0; i < st.sigma.size(); ++i) {
    b.sigma_s[offset + i] = st.sigma[i];
    b.sigma_d[offset + i] = dy.sigma[i];
    b.color_s[offset + i] = st.color.col(i);
    b.color_d[offset + i] = dy.color.col(i);
  }
}

}  // namespace detail

/// Renders rays sharing one timestamp: proposal sampling, fine-sample field evaluation and
/// blended compositing. Rays that miss the scene box get zero color and opacity.
template <typename T>
RenderBatch<T> render_rays(const SceneModel<T>& model, std::vector<Ray> rays, T time, const RenderOptions& opt,
                           Rng& rng) {
  RenderBatch<T> b;
  b.rays = std::move(rays);
  b.time = time;
  b.n_proposal = opt.sampler.n_proposal;
  b.n_fine = opt.sampler.n_fine;
  b.slot.assign(b.rays.size(), -1);
  for (std::size_t r = 0; r < b.rays.size(); ++r) {
    if (b.rays[r].hit) {
      b.slot[r] = static_cast<std::int32_t>(b.hit.size());
      b.hit.push_back(r);
    }
  }
  const std::size_t nh = b.hit.size();
  const int np = b.n_proposal, nf = b.n_fine;
  Rng* jitter = opt.sampler.jitter ? &rng : nullptr;

  // Proposal stage.
  b.prop_edges.resize(nh * (np + 1));
  b.prop_t.resize(nh * np);
  for (std::size_t s = 0; s < nh; ++s) {
    const Ray& ray = b.rays[b.hit[s]];
    stratified_samples<T>(ray.t_near, ray.t_far, np, jitter, std::span(b.prop_t).subspan(s * np, np),
                          std::span(b.prop_edges).subspan(s * (np + 1), np + 1));
  }
  b.prop_sigma.resize(nh * np);
  if (opt.keep_proposal_cache) {
    const auto pts = detail::unit_points<T>(model, b, b.prop_t, np, 0, nh);
    const RowVecX<T> sigma = model.proposal().forward(pts, time, &b.proposal_cache);
    std::copy(sigma.data(), sigma.data() + sigma.size(), b.prop_sigma.begin());
    b.has_proposal_cache = true;
  } else {
    const std::size_t chunk_rays = std::max<std::size_t>(1, opt.eval_chunk / std::max(np, 1));
    for (std::size_t s0 = 0; s0 < nh; s0 += chunk_rays) {
      const std::size_t n = std::min(chunk_rays, nh - s0);
      const auto pts = detail::unit_points<T>(model, b, b.prop_t, np, s0, n);
      const RowVecX<T> sigma = model.proposal().forward(pts, time);
      std::copy(sigma.data(), sigma.data() + sigma.size(), b.prop_sigma.begin() + s0 * np);
    }
  }
  b.prop_weights.resize(nh * np);
  b.t.resize(nh * nf);
  b.delta.resize(nh * nf);
  for (std::size_t s = 0; s < nh; ++s) {
    const Ray& ray = b.rays[b.hit[s]];
    auto edges = std::span<const T>(b.prop_edges).subspan(s * (np + 1), np + 1);
    auto w = std::span(b.prop_weights).subspan(s * np, np);
    proposal_histogram<T>(edges, std::span<const T>(b.prop_sigma).subspan(s * np, np), w);
    auto fine = std::span(b.t).subspan(s * nf, nf);
    inverse_cdf_samples<T>(edges, w, opt.sampler.histogram_padding, jitter, fine, 1e-6 * (ray.t_far - ray.t_near));
    sample_deltas<T>(fine, static_cast<T>(ray.t_far), std::span(b.delta).subspan(s * nf, nf));
  }

  // Fine stage.
  const std::size_t ns = nh * nf;
  b.sigma_s.resize(ns);
  b.sigma_d.resize(ns);
  b.color_s.resize(ns);
  b.color_d.resize(ns);
  if (opt.keep_field_cache) {
    const auto pts = detail::unit_points<T>(model, b, b.t, nf, 0, nh);
    const auto st = model.static_field().forward(pts, &b.static_cache);
    const auto dy = model.dynamic_field().forward(pts, time, &b.dynamic_cache);
    detail::store_fields(b, 0, st, dy);
    b.has_field_cache = true;
  } else {
    const std::size_t chunk_rays = std::max<std::size_t>(1, opt.eval_chunk / std::max(nf, 1));
    for (std::size_t s0 = 0; s0 < nh; s0 += chunk_rays) {
      const std::size_t n = std::min(chunk_rays, nh - s0);
      const auto pts = detail::unit_points<T>(model, b, b.t, nf, s0, n);
      const auto st = model.static_field().forward(pts);
      const auto dy = model.dynamic_field().forward(pts, time);
      detail::store_fields(b, s0 * nf, st, dy);
    }
  }

  b.raw_weights.resize(ns);
  b.weights.resize(ns);
  b.outputs.assign(b.rays.size(), BlendResult<T>{});
  parallel_for(nh, [&](std::size_t s) {
    b.outputs[b.hit[s]] = blend_forward<T>(b.samples(s), std::span(b.raw_weights).subspan(s * nf, nf),
                                           std::span(b.weights).subspan(s * nf, nf));
  });
  return b;
}

/// Backpropagates per-ray output gradients (indexed by ray) plus optional per-sample density
/// gradients into the static and dynamic fields. Without a kept cache the fields are
/// re-evaluated chunk by chunk on the stored samples.
template <typename T>
void render_backward(SceneModel<T>& model, const RenderBatch<T>& b, std::span<const BlendGrad<T>> ray_grads,
                     std::span<const T> extra_d_sigma_s = {}, std::span<const T> extra_d_sigma_d = {},
                     std::size_t eval_chunk = 1 << 15) {
  const std::size_t nh = b.hit_count();
  const int nf = b.n_fine;
  const std::size_t ns = nh * nf;
  std::vector<T> d_sigma_s(ns, T(0)), d_sigma_d(ns, T(0));
  std::vector<Vec3<T>> d_color_s(ns, Vec3<T>::Zero()), d_color_d(ns, Vec3<T>::Zero());
  parallel_for(nh, [&](std::size_t s) {
    const std::size_t o = s * nf;
    const std::size_t r = b.hit[s];
    blend_backward<T>(b.samples(s), b.raw_weights_of(s), b.outputs[r], ray_grads[r],
                      std::span(d_sigma_s).subspan(o, nf), std::span(d_sigma_d).subspan(o, nf),
                      std::span(d_color_s).subspan(o, nf), std::span(d_color_d).subspan(o, nf));
  });
  if (!extra_d_sigma_s.empty())
    for (std::size_t i = 0; i < ns; ++i) d_sigma_s[i] += extra_d_sigma_s[i];
  if (!extra_d_sigma_d.empty())
    for (std::size_t i = 0; i < ns; ++i) d_sigma_d[i] += extra_d_sigma_d[i];

  auto run = [&](std::size_t offset, std::size_t n, const typename StaticField<T>::Cache& sc,
                 const typename DynamicField<T>::Cache& dc) {
    RowVecX<T> dss(n), dsd(n);
    Mat3X<T> dcs(3, n), dcd(3, n);
    for (std::size_t i = 0; i < n; ++i) {
      dss[i] = d_sigma_s[offset + i];
      dsd[i] = d_sigma_d[offset + i];
      dcs.col(i) = d_color_s[offset + i];
      dcd.col(i) = d_color_d[offset + i];
    }
    model.static_field().backward(sc, dss, dcs);
    model.dynamic_field().backward(dc, dsd, dcd);
  };

  if (b.has_field_cache) {
    run(0, ns, b.static_cache, b.dynamic_cache);
    return;
  }
  const std::size_t chunk_rays = std::max<std::size_t>(1, eval_chunk / std::max(nf, 1));
  for (std::size_t s0 = 0; s0 < nh; s0 += chunk_rays) {
    const std::size_t n = std::min(chunk_rays, nh - s0);
    const auto pts = detail::unit_points<T>(model, b, b.t, nf, s0, n);
    typename StaticField<T>::Cache sc;
    typename DynamicField<T>::Cache dc;
    model.static_field().forward(pts, &sc);
    model.dynamic_field().forward(pts, b.time, &dc);
    run(s0 * nf, n * nf, sc, dc);
  }
}

/// Backpropagates gradients on the proposal histogram weights (n_proposal per hit slot) into
/// the proposal networks. Requires `keep_proposal_cache`.
template <typename T>
void proposal_backward(SceneModel<T>& model, const RenderBatch<T>& b, std::span<const T> d_prop_weights) {
  if (!b.has_proposal_cache) throw RenderError("proposal_backward: render without keep_proposal_cache");
  const int np = b.n_proposal;
  RowVecX<T> d_sigma = RowVecX<T>::Zero(static_cast<Eigen::Index>(b.prop_sigma.size()));
  for (std::size_t s = 0; s < b.hit_count(); ++s) {
    proposal_histogram_backward<T>(b.prop_edges_of(s), std::span<const T>(b.prop_sigma).subspan(s * np, np),
                                   b.prop_weights_of(s), d_prop_weights.subspan(s * np, np),
                                   std::span<T>(d_sigma.data() + s * np, np));
  }
  model.proposal().backward(b.proposal_cache, d_sigma);
}

/// Intrinsics rescaled to a new resolution.
inline CameraPose scale_camera(const CameraPose& cam, int width, int height) {
  CameraPose out = cam;
  const double sx = static_cast<double>(width) / cam.width;
  const double sy = static_cast<double>(height) / cam.height;
  out.fx *= sx;
  out.cx *= sx;
  out.fy *= sy;
  out.cy *= sy;
  out.width = width;
  out.height = height;
  return out;
}

template <typename T>
struct RenderedImage {
  Image<T> rgb;
  Image<T> depth;
  Image<T> dyn_ratio;
  Image<T> opacity;
};

template <typename T>
RenderedImage<T> images_from_batch(const RenderBatch<T>& b, int width, int height) {
  RenderedImage<T> img{Image<T>(width, height, 3), Image<T>(width, height, 1), Image<T>(width, height, 1),
                       Image<T>(width, height, 1)};
  for (std::size_t p = 0; p < b.outputs.size(); ++p) {
    const auto& o = b.outputs[p];
    for (int k = 0; k < 3; ++k) img.rgb.data[p * 3 + k] = o.color[k];
    img.depth.data[p] = o.depth;
    img.dyn_ratio.data[p] = o.dyn_ratio;
    img.opacity.data[p] = o.opacity;
  }
  return img;
}

/// Renders a full image through `camera` (intrinsics rescaled to width x height) at `time`.
template <typename T>
RenderedImage<T> render_image(const SceneModel<T>& model, const CameraPose& camera, T time, int width, int height,
                              Rng& rng, const SamplerConfig& sampler = {}) {
  if (width <= 0 || height <= 0) throw RenderError("render_image: resolution must be positive");
  const CameraPose cam = scale_camera(camera, width, height);
  const auto pixels = image_pixel_centers(width, height);
  RenderOptions opt;
  opt.sampler = sampler;
  auto batch = render_rays(model, generate_rays(cam, model.aabb(), pixels, static_cast<double>(time)), time, opt, rng);
  return images_from_batch(batch, width, height);
}

}  // namespace dyn4d
