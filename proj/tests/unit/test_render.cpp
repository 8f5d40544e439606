#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dyn4d/core/parallel.hpp"
#include "dyn4d/data/rays.hpp"
#include "dyn4d/render/blend.hpp"
#include "dyn4d/render/disparity.hpp"
#include "dyn4d/render/image_ops.hpp"
#include "dyn4d/render/render.hpp"
#include "dyn4d/render/sampling.hpp"
#include "fd.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dyn4d;

namespace {

std::vector<Eigen::Vector3d> to_eigen(const std::vector<Vec3d>& v) { return {v.begin(), v.end()}; }

Ray unit_ray(double t_near = 0.0, double t_far = 1.0) {
  Ray r;
  r.t_near = t_near;
  r.t_far = t_far;
  r.hit = true;
  return r;
}

}  // namespace

// ---- blend --------------------------------------------------------------------------------------

TEST(Blend, EmptySpaceIsBlack) {
  Rng rng(1);
  auto b = fixture::random_ray<double>(32, rng);
  std::fill(b.sigma_s.begin(), b.sigma_s.end(), 0.0);
  std::fill(b.sigma_d.begin(), b.sigma_d.end(), 0.0);
  const auto out = blend_render(b.view());
  EXPECT_EQ(out.result.color, Vec3d::Zero());
  EXPECT_EQ(out.result.opacity, 0.0);
}

TEST(Blend, StaticOnlyMatchesSingleFieldQuadrature) {
  Rng rng(2);
  auto b = fixture::random_ray<double>(64, rng, 50.0);
  std::fill(b.sigma_d.begin(), b.sigma_d.end(), 0.0);
  const auto out = blend_render(b.view());
  const Eigen::Vector3d ref = oracle::nerf_color(b.sigma_s, b.delta, to_eigen(b.color_s));
  EXPECT_GT(out.result.opacity, 0.99);
  // The only difference is sigma / (sigma + 1e-6) per sample.
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(out.result.color[k], ref[k], 1e-6);
}

TEST(Blend, EqualDensitiesAverageColors) {
  Rng rng(3);
  auto b = fixture::random_ray<double>(16, rng);
  b.sigma_d = b.sigma_s;
  for (std::size_t i = 0; i < b.t.size(); ++i) {
    const Vec3d c = blended_color(b.sigma_s[i], b.sigma_d[i], b.color_s[i], b.color_d[i]);
    const Vec3d avg = 0.5 * (b.color_s[i] + b.color_d[i]);
    EXPECT_LT((c - avg).norm(), 1e-6 / b.sigma_s[i]);
  }
}

TEST(Blend, ConstantDensityRayMatchesClosedForm) {
  const int n = 4096;
  RaySampleBatch<double> b;
  const Vec3d cs(0.9, 0.2, 0.1), cd(0.1, 0.3, 0.8);
  for (int i = 0; i < n; ++i) {
    const double t = (i + 0.5) / n;
    b.t.push_back(t);
    b.delta.push_back(1.0 / n);
    b.sigma_s.push_back(0.3 + 0.4 * t);
    b.sigma_d.push_back(0.7 - 0.4 * t);
    b.color_s.push_back(cs);
    b.color_d.push_back(cd);
  }
  const auto out = blend_render(b.view());
  // Continuous integral of exp(-t) (sigma_s(t) cs + sigma_d(t) cd) over [0,1].
  const double e1 = 1 - std::exp(-1.0), e2 = 1 - 2 / std::exp(1.0);
  const Vec3d exact = (0.3 * e1 + 0.4 * e2) * cs + (0.7 * e1 - 0.4 * e2) * cd;
  EXPECT_LT((out.result.color - exact).cwiseAbs().maxCoeff(), 1e-4);

  RaySampleBatch<double> c = b;
  std::fill(c.sigma_s.begin(), c.sigma_s.end(), 0.5);
  std::fill(c.sigma_d.begin(), c.sigma_d.end(), 0.5);
  const auto out_c = blend_render(c.view());
  EXPECT_LT((out_c.result.color - e1 * 0.5 * (cs + cd)).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Blend, QuadratureErrorShrinksWithStepSize) {
  const Vec3d cs(1.0, 0.0, 0.25), cd(0.0, 1.0, 0.5);
  // Integral of the blend as implemented: sigma_s + sigma_d = 1 here, so the color carries 1 / (1 + 1e-6).
  const Vec3d exact = ((1 - 2 / std::exp(1.0)) * cs + (1 / std::exp(1.0)) * cd) / (1.0 + 1e-6);
  double prev = 0.0;
  for (int n : {64, 128, 256, 512}) {
    const auto b = fixture::linear_family<double>(n, cs, cd);
    const double err = (blend_render(b.view()).result.color - exact).cwiseAbs().maxCoeff();
    if (prev > 0.0) {
      EXPECT_GE(prev / err, 2.0) << n;
    }
    prev = err;
  }
}

TEST(Blend, TelescopingIdentity) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto b = fixture::random_ray<double>(1 + static_cast<int>(uniform_index(rng, 64)), rng);
    const auto out = blend_render(b.view());
    Vec3d tele = Vec3d::Zero();
    double optical = 0.0;
    for (std::size_t i = 0; i < b.t.size(); ++i) {
      const double ti = std::exp(-optical);
      optical += (b.sigma_s[i] + b.sigma_d[i]) * b.delta[i];
      tele += (ti - std::exp(-optical)) * blended_color(b.sigma_s[i], b.sigma_d[i], b.color_s[i], b.color_d[i]);
    }
    EXPECT_LT((out.result.color - tele).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Blend, MatchesTwoPassReference) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto b = fixture::random_ray<double>(48, rng);
    const auto out = blend_render(b.view());
    const Eigen::Vector3d ref =
        oracle::two_pass_blend(b.sigma_s, b.sigma_d, b.delta, to_eigen(b.color_s), to_eigen(b.color_d));
    EXPECT_LT((out.result.color - ref).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Blend, Invariants) {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    const auto b = fixture::random_ray<double>(32, rng, trial % 2 ? 200.0 : 2.0);
    const auto out = blend_render(b.view());
    double sum = 0.0, optical = 0.0, prev_trans = 1.0;
    for (std::size_t i = 0; i < b.t.size(); ++i) {
      EXPECT_GE(out.raw_weights[i], 0.0);
      optical += (b.sigma_s[i] + b.sigma_d[i]) * b.delta[i];
      EXPECT_LE(std::exp(-optical), prev_trans);
      prev_trans = std::exp(-optical);
      sum += out.raw_weights[i];
    }
    EXPECT_LE(sum, 1.0 + 1e-6);
    for (int k = 0; k < 3; ++k) {
      EXPECT_GE(out.result.color[k], -1e-6);
      EXPECT_LE(out.result.color[k], 1.0 + 1e-6);
    }
    EXPECT_GE(out.result.dyn_ratio, 0.0);
    EXPECT_LE(out.result.dyn_ratio, 1.0);
    if (out.result.opacity > 0.5) {
      // Normalized depth stays within the sampled range (the 1e-6 stabilizer only pulls toward 0).
      EXPECT_LE(out.result.depth, b.t.back());
      EXPECT_GE(out.result.depth, b.t.front() * (1 - 1e-5));
    }
  }
}

TEST(Blend, BackwardMatchesFiniteDifferences) {
  using W = fixture::Wide;
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const auto b = fixture::random_ray<double>(12, rng, 8.0);
    const std::size_t n = b.t.size();
    BlendGrad<double> g;
    g.color = Vec3d(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    g.depth = uniform(rng, -1, 1);
    g.opacity = uniform(rng, -1, 1);
    g.dyn_ratio = uniform(rng, -1, 1);
    std::vector<double> gw(n), graw(n);
    for (auto& v : gw) v = uniform(rng, -1, 1);
    for (auto& v : graw) v = uniform(rng, -1, 1);
    g.weights = gw;
    g.raw_weights = graw;

    const auto out = blend_render(b.view());
    std::vector<double> dss(n), dsd(n);
    std::vector<Vec3d> dcs(n, Vec3d::Zero()), dcd(n, Vec3d::Zero());
    blend_backward<double>(b.view(), out.raw_weights, out.result, g, dss, dsd, dcs, dcd);

    RaySampleBatch<W> w;
    w.t.assign(b.t.begin(), b.t.end());
    w.delta.assign(b.delta.begin(), b.delta.end());
    w.sigma_s.assign(b.sigma_s.begin(), b.sigma_s.end());
    w.sigma_d.assign(b.sigma_d.begin(), b.sigma_d.end());
    for (std::size_t i = 0; i < n; ++i) {
      w.color_s.push_back(b.color_s[i].cast<W>());
      w.color_d.push_back(b.color_d[i].cast<W>());
    }
    auto f = [&]() -> W {
      const auto o = blend_render(w.view());
      W s = o.result.color.dot(g.color.cast<W>()) + g.depth * o.result.depth + g.opacity * o.result.opacity +
            g.dyn_ratio * o.result.dyn_ratio;
      for (std::size_t i = 0; i < n; ++i) s += gw[i] * o.weights[i] + graw[i] * o.raw_weights[i];
      return s;
    };
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_LT(fd::rel_err(dss[i], fd::central(f, w.sigma_s[i], 1e-6), 1e-9), 1e-6) << "sigma_s " << i;
      EXPECT_LT(fd::rel_err(dsd[i], fd::central(f, w.sigma_d[i], 1e-6), 1e-9), 1e-6) << "sigma_d " << i;
      for (int k = 0; k < 3; ++k) {
        EXPECT_LT(fd::rel_err(dcs[i][k], fd::central(f, w.color_s[i][k], 1e-6), 1e-9), 1e-6);
        EXPECT_LT(fd::rel_err(dcd[i][k], fd::central(f, w.color_d[i][k], 1e-6), 1e-9), 1e-6);
      }
    }
  }
}

// ---- sampling -----------------------------------------------------------------------------------

TEST(Sampling, UniformDensityGivesUniformFineSamples) {
  SamplerConfig cfg;
  Rng rng(11);
  std::vector<double> all;
  const Ray ray = unit_ray();
  for (int r = 0; r < 10000; ++r) {
    const auto s = propose_samples([](double) { return 1e-3; }, ray, cfg, rng);
    // One sample per ray keeps the draws independent.
    all.push_back(s.t[uniform_index(rng, s.t.size())]);
  }
  std::sort(all.begin(), all.end());
  double ks = 0.0;
  const double n = static_cast<double>(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) ks = std::max({ks, std::abs((i + 1) / n - all[i]), std::abs(all[i] - i / n)});
  EXPECT_LT(ks, 0.05);
}

TEST(Sampling, FineSamplesConcentrateOnDenseRegion) {
  SamplerConfig cfg;
  Rng rng(12);
  auto density = [](double t) { return (t >= 0.4 && t < 0.5) ? 100.0 : 0.0; };
  const auto s = propose_samples(density, unit_ray(), cfg, rng);
  const auto inside = std::count_if(s.t.begin(), s.t.end(), [](double t) { return t >= 0.4 && t <= 0.5; });
  EXPECT_GE(inside, static_cast<long>(0.8 * s.t.size()));
}

TEST(Sampling, DeterministicAndStrictlyIncreasing) {
  SamplerConfig cfg;
  auto density = [](double t) { return t < 0.3 ? 0.0 : 50.0 * std::exp(-40 * (t - 0.6) * (t - 0.6)); };
  const Ray ray = unit_ray(2.0, 6.0);
  Rng a(13), b(13);
  const auto sa = propose_samples(density, ray, cfg, a);
  const auto sb = propose_samples(density, ray, cfg, b);
  EXPECT_EQ(sa.t, sb.t);
  ASSERT_EQ(sa.t.size(), 64u);
  EXPECT_EQ(sa.proposal_t.size(), 128u);
  for (std::size_t i = 1; i < sa.t.size(); ++i) EXPECT_GE(sa.t[i] - sa.t[i - 1], 1e-6 * 4.0 * (1 - 1e-9));
  EXPECT_GE(sa.t.front(), 2.0);
  EXPECT_LT(sa.t.back(), 6.0);
  for (double d : sa.delta) EXPECT_GT(d, 0.0);
}

TEST(Sampling, SpikyDensityStillGivesDistinctSamples) {
  SamplerConfig cfg;
  cfg.histogram_padding = 0.0;
  Rng rng(14);
  auto density = [](double t) { return (t > 0.5 && t < 0.51) ? 1e6 : 0.0; };
  const auto s = propose_samples(density, unit_ray(), cfg, rng);
  for (std::size_t i = 1; i < s.t.size(); ++i) EXPECT_GE(s.t[i] - s.t[i - 1], 1e-6 * (1 - 1e-9));
}

TEST(Sampling, EmptyRayThrows) {
  SamplerConfig cfg;
  Rng rng(15);
  Ray miss;
  EXPECT_THROW(propose_samples([](double) { return 1.0; }, miss, cfg, rng), RenderError);
  EXPECT_THROW(propose_samples([](double) { return 1.0; }, unit_ray(1.0, 1.0), cfg, rng), RenderError);
}

// ---- render_image -------------------------------------------------------------------------------

TEST(RenderImage, EmptySceneIsBlack) {
  SceneModel<double> model(fixture::tiny_model_config());
  fixture::constant_scene(model, -200.0, Vec3d::Zero(), -200.0, Vec3d::Zero(), -200.0);
  Rng rng(1);
  SamplerConfig s{16, 8};
  const auto img = render_image<double>(model, fixture::front_camera(), 0.0, 8, 8, rng, s);
  for (double v : img.rgb.data) EXPECT_LT(v, 1e-12);
  for (double v : img.opacity.data) EXPECT_LT(v, 1e-12);
}

TEST(RenderImage, MissingRaysAreBlack) {
  SceneModel<double> model(fixture::tiny_model_config());
  fixture::constant_scene(model, 5.0, Vec3d(2, 2, 2), 5.0, Vec3d(2, 2, 2), 5.0);
  CameraPose cam = fixture::front_camera(8, 8);
  cam.rotation = look_at_rotation(cam.translation, cam.translation + Vec3d(0, 0, 1), Vec3d::UnitY());
  Rng rng(2);
  const auto img = render_image<double>(model, cam, 0.0, 8, 8, rng, SamplerConfig{16, 8});
  for (double v : img.rgb.data) EXPECT_EQ(v, 0.0);
  for (double v : img.opacity.data) EXPECT_EQ(v, 0.0);
}

TEST(RenderImage, OpaqueRedBox) {
  auto cfg = fixture::tiny_model_config();
  cfg.aabb = Aabb{Vec3d::Constant(-0.5), Vec3d::Constant(0.5)};
  SceneModel<double> model(cfg);
  fixture::constant_scene(model, 1e4, Vec3d(10, -10, -10), -200.0, Vec3d::Zero(), 5.0);
  CameraPose cam = fixture::front_camera(9, 9);
  cam.translation = Vec3d(0, 0, 3);
  cam.rotation = look_at_rotation(cam.translation, Vec3d::Zero(), Vec3d::UnitY());
  Rng rng(3);
  const int np = 64, nf = 32;
  const auto rays = generate_rays(cam, model.aabb(), image_pixel_centers(9, 9), 0.0);
  RenderOptions opt;
  opt.sampler = {np, nf};
  const auto batch = render_rays<double>(model, rays, 0.0, opt, rng);
  const auto img = images_from_batch(batch, 9, 9);
  for (int r = 3; r <= 5; ++r)
    for (int c = 3; c <= 5; ++c) {
      const Ray& ray = rays[r * 9 + c];
      ASSERT_TRUE(ray.hit);
      EXPECT_GT(img.rgb(r, c, 0), 0.99);
      EXPECT_LT(img.rgb(r, c, 1), 0.01);
      EXPECT_LT(img.rgb(r, c, 2), 0.01);
      EXPECT_GT(img.opacity(r, c), 0.99);
      // Entry distance along the ray; 2.5 on the optical axis.
      const double interval = (ray.t_far - ray.t_near) / np;
      EXPECT_NEAR(img.depth(r, c), ray.t_near, 2 * interval) << r << "," << c;
    }
  EXPECT_NEAR(img.depth(4, 4), 2.5, 2 * 1.0 / np);
}

TEST(RenderImage, SameSeedIsBitIdentical) {
  set_worker_count(1);
  SceneModel<double> model(fixture::tiny_model_config(4));
  fixture::randomize_tables(model, 9);
  Rng a(5), b(5);
  const auto ia = render_image<double>(model, fixture::front_camera(), 0.3, 8, 8, a, SamplerConfig{32, 16});
  const auto ib = render_image<double>(model, fixture::front_camera(), 0.3, 8, 8, b, SamplerConfig{32, 16});
  set_worker_count(0);
  EXPECT_EQ(ia.rgb.data, ib.rgb.data);
  EXPECT_EQ(ia.depth.data, ib.depth.data);
  EXPECT_EQ(ia.opacity.data, ib.opacity.data);
  EXPECT_EQ(ia.dyn_ratio.data, ib.dyn_ratio.data);
}

TEST(RenderImage, ParallelForwardMatchesSerial) {
  SceneModel<double> model(fixture::tiny_model_config(6));
  fixture::randomize_tables(model, 10);
  set_worker_count(1);
  Rng a(5), b(5);
  const auto ia = render_image<double>(model, fixture::front_camera(), 0.6, 12, 12, a, SamplerConfig{32, 16});
  set_worker_count(4);
  const auto ib = render_image<double>(model, fixture::front_camera(), 0.6, 12, 12, b, SamplerConfig{32, 16});
  set_worker_count(0);
  EXPECT_EQ(ia.rgb.data, ib.rgb.data);
}

TEST(RenderImage, NonPositiveResolutionThrows) {
  SceneModel<double> model(fixture::tiny_model_config());
  Rng rng(1);
  EXPECT_THROW(render_image<double>(model, fixture::front_camera(), 0.0, 0, 4, rng), RenderError);
}

// ---- render gradients ---------------------------------------------------------------------------

namespace {

void check_render_gradients(bool cache) {
  SceneModel<double> model(fixture::tiny_model_config(7));
  fixture::randomize_tables(model, 11, 1.0);
  const auto cam = fixture::front_camera(4, 4);
  const auto rays = generate_rays(cam, model.aabb(), image_pixel_centers(4, 4), 0.4);
  const fixture::RenderFunctional J(rays.size(), 12);
  const auto batch = fixture::render_fixed(model, rays, 0.4, 16, 12, cache);
  ASSERT_GT(batch.hit_count(), 8u);
  model.parameters().zero_grad();
  const auto grads = J.grads<double>(rays.size());
  render_backward<double>(model, batch, grads);

  // Sample positions come from the f64 proposal pass; the wide model re-evaluates the fields
  // on exactly those positions.
  auto wide = convert_model<fixture::Wide>(model);
  auto f = [&] { return J(fixture::rerender_wide(wide, batch)); };
  Rng pick(13);
  int checked = 0;
  std::vector<Parameter<double>*> params;
  model.parameters().for_each([&](Parameter<double>& p) {
    if (p.name.rfind("proposal.", 0) != 0) params.push_back(&p);
  });
  for (auto* p : params) {
    for (int rep = 0; rep < 3; ++rep) {
      const std::size_t k = uniform_index(pick, p->size());
      const double num = fd::central(f, fixture::wide_param(wide, p->name, k), 1e-6);
      EXPECT_LT(fd::rel_err(p->grad[k], num, 1e-9), 1e-6) << p->name << "[" << k << "]";
      ++checked;
    }
  }
  EXPECT_GE(checked, 100);
}

}  // namespace

TEST(RenderBackward, MatchesFiniteDifferencesWithCache) { check_render_gradients(true); }
TEST(RenderBackward, MatchesFiniteDifferencesRecomputed) { check_render_gradients(false); }

TEST(RenderBackward, ProposalGradientMatchesFiniteDifferences) {
  SceneModel<double> model(fixture::tiny_model_config(8));
  fixture::randomize_tables(model, 14, 1.0);
  const auto rays = generate_rays(fixture::front_camera(3, 3), model.aabb(), image_pixel_centers(3, 3), 0.7);
  auto batch = fixture::render_fixed(model, rays, 0.7, 12, 8, true);
  Rng rng(15);
  std::vector<double> coef(batch.prop_weights.size());
  for (auto& c : coef) c = uniform(rng, -1, 1);
  model.parameters().zero_grad();
  proposal_backward<double>(model, batch, coef);

  auto wide = convert_model<fixture::Wide>(model);
  const int np = batch.n_proposal;
  auto f = [&]() -> fixture::Wide {
    fixture::Wide s = 0;
    for (std::size_t h = 0; h < batch.hit_count(); ++h) {
      const Ray& ray = batch.rays[batch.hit[h]];
      std::vector<Vec3<fixture::Wide>> pts;
      for (int k = 0; k < np; ++k)
        pts.push_back(wide.normalize(ray.origin + static_cast<double>(batch.prop_t[h * np + k]) * ray.direction));
      const auto sigma = wide.proposal().forward(pts, static_cast<fixture::Wide>(0.7));
      std::vector<fixture::Wide> edges(batch.prop_edges.begin() + h * (np + 1),
                                       batch.prop_edges.begin() + (h + 1) * (np + 1));
      std::vector<fixture::Wide> sg(sigma.data(), sigma.data() + np), w(np);
      proposal_histogram<fixture::Wide>(edges, sg, w);
      for (int k = 0; k < np; ++k) s += coef[h * np + k] * w[k];
    }
    return s;
  };
  int checked = 0;
  for (auto* p : fixture::params_matching(model, "proposal.")) {
    for (std::size_t k = 0; k < p->size(); k += std::max<std::size_t>(1, p->size() / 5)) {
      const double num = fd::central(f, fixture::wide_param(wide, p->name, k), 1e-6);
      EXPECT_LT(fd::rel_err(p->grad[k], num, 1e-9), 1e-6) << p->name << "[" << k << "]";
      ++checked;
    }
  }
  EXPECT_GT(checked, 30);
}

TEST(RenderBackward, ProposalBackwardNeedsCache) {
  SceneModel<double> model(fixture::tiny_model_config());
  const auto rays = generate_rays(fixture::front_camera(2, 2), model.aabb(), image_pixel_centers(2, 2), 0.0);
  auto batch = fixture::render_fixed(model, rays, 0.0, 8, 4, false);
  std::vector<double> coef(batch.prop_weights.size(), 1.0);
  EXPECT_THROW(proposal_backward<double>(model, batch, coef), RenderError);
}

// ---- disparity ----------------------------------------------------------------------------------

TEST(Disparity, ConstantDepthGivesZeros) {
  Image<double> depth(8, 8, 1, 3.0), opacity(8, 8, 1, 1.0);
  const auto out = depth_to_normalized_disparity(depth, opacity);
  for (double v : out.disparity.data) EXPECT_EQ(v, 0.0);
}

TEST(Disparity, RampSpansUnitIntervalWithFewClamped) {
  const int w = 50, h = 40;
  Image<double> depth(w, h, 1), opacity(w, h, 1, 1.0);
  for (std::size_t i = 0; i < depth.data.size(); ++i) depth.data[i] = 1.0 + double(i) / (depth.data.size() - 1);
  const auto out = depth_to_normalized_disparity(depth, opacity);
  const auto [lo, hi] = std::minmax_element(out.disparity.data.begin(), out.disparity.data.end());
  EXPECT_EQ(*lo, 0.0);
  EXPECT_NEAR(*hi, 1.0, 1e-5);
  const double n = static_cast<double>(out.disparity.data.size());
  EXPECT_LE(std::count(out.disparity.data.begin(), out.disparity.data.end(), 0.0) / n, 0.05 + 1 / n);
  EXPECT_LE(std::count_if(out.disparity.data.begin(), out.disparity.data.end(), [](double v) { return v >= 1 - 1e-5; }) / n,
            0.05 + 1 / n);
  // Nearer pixels get larger disparity.
  EXPECT_GT(out.disparity.data[100], out.disparity.data[1800]);
}

TEST(Disparity, RobustToOutliers) {
  const int w = 40, h = 50;
  Image<double> depth(w, h, 1), opacity(w, h, 1, 1.0);
  Rng rng(16);
  for (double& d : depth.data) d = uniform(rng, 1.0, 3.0);
  const auto base = depth_to_normalized_disparity(depth, opacity);
  Image<double> noisy = depth;
  std::vector<std::size_t> outliers;
  for (std::size_t i = 0; i < noisy.data.size(); i += 100) {
    noisy.data[i] = 1000.0;
    outliers.push_back(i);
  }
  const auto pert = depth_to_normalized_disparity(noisy, opacity);
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    if (i % 100 == 0) continue;
    EXPECT_LT(std::abs(base.disparity.data[i] - pert.disparity.data[i]), 1e-2) << i;
  }
}

TEST(Disparity, InvalidPixelsAreZeroAndAllInvalidThrows) {
  Image<double> depth(4, 4, 1, 2.0), opacity(4, 4, 1, 0.2);
  EXPECT_THROW(depth_to_normalized_disparity(depth, opacity), RenderError);
  opacity.data[0] = 0.9;
  opacity.data[1] = 0.9;
  depth.data[1] = 4.0;
  const auto out = depth_to_normalized_disparity(depth, opacity);
  for (std::size_t i = 2; i < out.disparity.data.size(); ++i) EXPECT_EQ(out.disparity.data[i], 0.0);
  EXPECT_EQ(out.valid.data[5], 0);
}

TEST(Disparity, BackwardMatchesFiniteDifferences) {
  Image<double> depth(6, 5, 1), opacity(6, 5, 1, 1.0), g(6, 5, 1);
  Rng rng(17);
  for (double& d : depth.data) d = uniform(rng, 1.0, 4.0);
  for (double& v : g.data) v = uniform(rng, -1, 1);
  const auto fwd = depth_to_normalized_disparity(depth, opacity);
  const auto dd = normalized_disparity_backward(depth, fwd, g);
  // Bounds are held fixed, so perturb with the reference bounds frozen.
  const double scale = 1.0 / (fwd.d_max - fwd.d_min + 1e-6);
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    const double raw = (1.0 / depth.data[i] - fwd.d_min) * scale;
    if (raw <= 1e-4 || raw >= 1 - 1e-4) {
      EXPECT_EQ(dd.data[i], 0.0);
      continue;
    }
    fixture::Wide x = depth.data[i];
    auto f = [&]() -> fixture::Wide { return g.data[i] * (1 / x - fwd.d_min) * scale; };
    EXPECT_LT(fd::rel_err(dd.data[i], fd::central(f, x, 1e-6), 1e-9), 1e-6);
  }
}

// ---- crop / resize ------------------------------------------------------------------------------

namespace {
Image<double> random_image(int w, int h, int c, std::uint64_t seed) {
  Image<double> img(w, h, c);
  Rng rng(seed);
  for (double& v : img.data) v = uniform(rng, -1, 1);
  return img;
}
double dot(const Image<double>& a, const Image<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}
}  // namespace

TEST(ImageOps, CropAdjointIdentity) {
  const auto x = random_image(20, 14, 3, 1);
  const CropWindow win{2, 5, 9};
  const auto y = random_image(9, 9, 3, 2);
  EXPECT_NEAR(dot(crop(x, win), y), dot(x, crop_adjoint(y, win, 20, 14)), 1e-12);
  EXPECT_THROW(crop(x, CropWindow{6, 0, 9}), ValidationError);
}

TEST(ImageOps, ResizeAdjointIdentity) {
  for (auto [sw, sh, dw, dh] : {std::array{20, 14, 7, 7}, std::array{5, 5, 16, 16}, std::array{9, 12, 9, 12}}) {
    const auto x = random_image(sw, sh, 2, 3);
    const auto y = random_image(dw, dh, 2, 4);
    EXPECT_NEAR(dot(resize_bilinear(x, dw, dh), y), dot(x, resize_bilinear_adjoint(y, sw, sh)), 1e-12);
  }
}

TEST(ImageOps, ResizeSameSizeIsIdentityAndConstantsArePreserved) {
  const auto x = random_image(11, 7, 3, 5);
  EXPECT_EQ(resize_bilinear(x, 11, 7).data, x.data);
  const Image<double> c(13, 9, 1, 0.25);
  for (double v : resize_bilinear(c, 5, 4).data) EXPECT_NEAR(v, 0.25, 1e-15);
}
