// Small models and helpers shared by the unit and acceptance tests.
#pragma once

#include <cmath>
#include <vector>

#include "dyn4d/core/random.hpp"
#include "dyn4d/fields/scene_model.hpp"

namespace fixture {

/// Three levels; the last one is hashed (9^3 > 2^8).
inline dyn4d::HashGridConfig tiny_grid() { return {3, 2, 8, 4, 1.5}; }

inline dyn4d::ModelConfig tiny_model_config(std::uint64_t seed = 1) {
  dyn4d::ModelConfig cfg;
  cfg.radiance_grid = tiny_grid();
  cfg.proposal_grid = {2, 2, 8, 4, 1.5};
  cfg.widths.hidden = 8;
  cfg.widths.head_hidden_layers = 2;
  cfg.widths.fusion_hidden = 8;
  cfg.widths.fused = 6;
  cfg.widths.proposal_hidden = 4;
  cfg.init_seed = seed;
  return cfg;
}

/// Replaces every hash table with U(-scale, scale) entries so the networks see real features.
template <typename T>
void randomize_tables(dyn4d::SceneModel<T>& model, std::uint64_t seed, double scale = 0.5) {
  dyn4d::Rng rng(seed);
  model.parameters().for_each([&](dyn4d::Parameter<T>& p) {
    if (p.name.find(".level") == std::string::npos) return;
    for (auto& v : p.value) v = static_cast<T>(dyn4d::uniform(rng, -scale, scale));
  });
}

template <typename T>
void zero_tables(dyn4d::SceneModel<T>& model) {
  model.parameters().for_each([&](dyn4d::Parameter<T>& p) {
    if (p.name.find(".level") == std::string::npos) return;
    for (auto& v : p.value) v = T(0);
  });
}

/// Parameters whose name contains `part`.
template <typename T>
std::vector<dyn4d::Parameter<T>*> params_matching(dyn4d::SceneModel<T>& model, const std::string& part) {
  std::vector<dyn4d::Parameter<T>*> out;
  model.parameters().for_each([&](dyn4d::Parameter<T>& p) {
    if (p.name.find(part) != std::string::npos) out.push_back(&p);
  });
  return out;
}

template <typename T>
std::vector<dyn4d::Vec3<T>> random_unit_points(std::size_t n, std::uint64_t seed) {
  dyn4d::Rng rng(seed);
  std::vector<dyn4d::Vec3<T>> pts(n);
  for (auto& p : pts)
    for (int a = 0; a < 3; ++a) p[a] = static_cast<T>(dyn4d::uniform01(rng));
  return pts;
}

}  // namespace fixture

namespace fixture {

using Wide = long double;

template <typename T>
std::vector<dyn4d::Vec3<Wide>> widen(const std::vector<dyn4d::Vec3<T>>& pts) {
  std::vector<dyn4d::Vec3<Wide>> out;
  for (const auto& p : pts) out.push_back(p.template cast<Wide>());
  return out;
}

/// The value that `name[k]` holds inside a wide-precision copy of a model.
inline Wide& wide_param(dyn4d::SceneModel<Wide>& model, const std::string& name, std::size_t k) {
  return model.parameters().find(name)->value[k];
}

}  // namespace fixture

#include "dyn4d/render/blend.hpp"
#include "dyn4d/render/render.hpp"

namespace fixture {

/// N midpoint samples on [0,1] with sigma_s = t, sigma_d = 1 - t and constant colors. The exact
/// integral is (1 - 2/e) cs + (1/e) cd.
template <typename T>
dyn4d::RaySampleBatch<T> linear_family(int n, const dyn4d::Vec3<T>& cs, const dyn4d::Vec3<T>& cd) {
  dyn4d::RaySampleBatch<T> b;
  for (int i = 0; i < n; ++i) {
    const T t = (T(i) + T(0.5)) / T(n);
    b.t.push_back(t);
    b.delta.push_back(T(1) / T(n));
    b.sigma_s.push_back(t);
    b.sigma_d.push_back(T(1) - t);
    b.color_s.push_back(cs);
    b.color_d.push_back(cd);
  }
  return b;
}

template <typename T>
dyn4d::RaySampleBatch<T> random_ray(int n, dyn4d::Rng& rng, double max_sigma = 5.0) {
  dyn4d::RaySampleBatch<T> b;
  double t = dyn4d::uniform(rng, 0.5, 1.0);
  for (int i = 0; i < n; ++i) {
    const double d = dyn4d::uniform(rng, 0.01, 0.1);
    b.t.push_back(static_cast<T>(t));
    b.delta.push_back(static_cast<T>(d));
    t += d;
    b.sigma_s.push_back(static_cast<T>(dyn4d::uniform(rng, 0, max_sigma)));
    b.sigma_d.push_back(static_cast<T>(dyn4d::uniform(rng, 0, max_sigma)));
    dyn4d::Vec3<T> cs, cd;
    for (int k = 0; k < 3; ++k) {
      cs[k] = static_cast<T>(dyn4d::uniform01(rng));
      cd[k] = static_cast<T>(dyn4d::uniform01(rng));
    }
    b.color_s.push_back(cs);
    b.color_d.push_back(cd);
  }
  return b;
}

/// Camera three units in front of the unit box, looking down -z.
inline dyn4d::CameraPose front_camera(int w = 8, int h = 8) {
  dyn4d::CameraPose cam;
  cam.width = w;
  cam.height = h;
  cam.fx = cam.fy = 1.5 * w;
  cam.cx = w / 2.0;
  cam.cy = h / 2.0;
  cam.translation = dyn4d::Vec3d(0.1, -0.05, 3.0);
  cam.rotation = dyn4d::look_at_rotation(cam.translation, dyn4d::Vec3d(0.0, 0.1, 0.0), dyn4d::Vec3d::UnitY());
  cam.near = 0.1;
  cam.far = 10.0;
  return cam;
}

/// sum_r a_r . C_r + b_r depth_r + c_r opacity_r over a rendered batch, with fixed per-ray coefficients.
struct RenderFunctional {
  std::vector<double> a, b, c;
  RenderFunctional(std::size_t rays, std::uint64_t seed) : a(3 * rays), b(rays), c(rays) {
    dyn4d::Rng rng(seed);
    for (auto& v : a) v = dyn4d::uniform(rng, -1, 1);
    for (auto& v : b) v = dyn4d::uniform(rng, -1, 1);
    for (auto& v : c) v = dyn4d::uniform(rng, -1, 1);
  }
  template <typename T>
  T operator()(const dyn4d::RenderBatch<T>& batch) const {
    T s = 0;
    for (std::size_t r = 0; r < batch.outputs.size(); ++r) {
      const auto& o = batch.outputs[r];
      for (int k = 0; k < 3; ++k) s += a[3 * r + k] * o.color[k];
      s += b[r] * o.depth + c[r] * o.opacity;
    }
    return s;
  }
  template <typename T>
  std::vector<dyn4d::BlendGrad<T>> grads(std::size_t rays) const {
    std::vector<dyn4d::BlendGrad<T>> g(rays);
    for (std::size_t r = 0; r < rays; ++r) {
      for (int k = 0; k < 3; ++k) g[r].color[k] = static_cast<T>(a[3 * r + k]);
      g[r].depth = static_cast<T>(b[r]);
      g[r].opacity = static_cast<T>(c[r]);
    }
    return g;
  }
};

/// Re-evaluates a wide-precision model at exactly the fine samples of `batch` and blends.
template <typename T>
dyn4d::RenderBatch<Wide> rerender_wide(const dyn4d::SceneModel<Wide>& wide, const dyn4d::RenderBatch<T>& batch) {
  dyn4d::RenderBatch<Wide> wb;
  wb.rays = batch.rays;
  wb.time = static_cast<Wide>(batch.time);
  wb.n_proposal = batch.n_proposal;
  wb.n_fine = batch.n_fine;
  wb.slot = batch.slot;
  wb.hit = batch.hit;
  wb.t.assign(batch.t.begin(), batch.t.end());
  wb.delta.assign(batch.delta.begin(), batch.delta.end());
  const auto pts = dyn4d::detail::unit_points<Wide>(wide, wb, wb.t, wb.n_fine, 0, wb.hit.size());
  const auto st = wide.static_field().forward(pts);
  const auto dy = wide.dynamic_field().forward(pts, wb.time);
  const std::size_t ns = wb.t.size();
  wb.sigma_s.resize(ns);
  wb.sigma_d.resize(ns);
  wb.color_s.resize(ns);
  wb.color_d.resize(ns);
  dyn4d::detail::store_fields(wb, 0, st, dy);
  wb.raw_weights.resize(ns);
  wb.weights.resize(ns);
  wb.outputs.assign(wb.rays.size(), dyn4d::BlendResult<Wide>{});
  for (std::size_t s = 0; s < wb.hit.size(); ++s)
    wb.outputs[wb.hit[s]] = dyn4d::blend_forward<Wide>(wb.samples(s),
                                                       std::span(wb.raw_weights).subspan(s * wb.n_fine, wb.n_fine),
                                                       std::span(wb.weights).subspan(s * wb.n_fine, wb.n_fine));
  return wb;
}

/// Renders `rays` with a fresh rng so repeated calls place samples identically.
template <typename T>
dyn4d::RenderBatch<T> render_fixed(const dyn4d::SceneModel<T>& model, const std::vector<dyn4d::Ray>& rays, double time,
                                   int n_prop, int n_fine, bool cache = false) {
  dyn4d::RenderOptions opt;
  opt.sampler.n_proposal = n_prop;
  opt.sampler.n_fine = n_fine;
  opt.keep_field_cache = cache;
  opt.keep_proposal_cache = cache;
  dyn4d::Rng rng(77);
  return dyn4d::render_rays<T>(model, rays, static_cast<T>(time), opt, rng);
}

}  // namespace fixture

namespace fixture {

/// Makes every field spatially constant: all weights and biases zero, then output biases set.
/// Densities are softplus(raw), colors sigmoid(raw).
template <typename T>
void constant_scene(dyn4d::SceneModel<T>& model, double static_raw, const dyn4d::Vec3d& static_color_raw,
                    double dynamic_raw, const dyn4d::Vec3d& dynamic_color_raw, double proposal_raw) {
  model.parameters().for_each([](dyn4d::Parameter<T>& p) {
    for (auto& v : p.value) v = T(0);
  });
  auto last_bias = [&](const std::string& head) -> dyn4d::Parameter<T>& {
    dyn4d::Parameter<T>* out = nullptr;
    model.parameters().for_each([&](dyn4d::Parameter<T>& p) {
      if (p.name.rfind(head + ".layer", 0) == 0 && p.name.ends_with(".bias")) out = &p;
    });
    return *out;
  };
  last_bias("static.density_head").value[0] = static_cast<T>(static_raw);
  last_bias("dynamic.density_head").value[0] = static_cast<T>(dynamic_raw);
  for (int k = 0; k < 3; ++k) {
    last_bias("static.color_head").value[k] = static_cast<T>(static_color_raw[k]);
    last_bias("dynamic.color_head").value[k] = static_cast<T>(dynamic_color_raw[k]);
  }
  last_bias("proposal.static.density_head").value[0] = static_cast<T>(proposal_raw);
  last_bias("proposal.dynamic.density_head").value[0] = static_cast<T>(proposal_raw);
}

}  // namespace fixture
