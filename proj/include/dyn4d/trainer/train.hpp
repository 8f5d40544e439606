#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dyn4d/core/error.hpp"
#include "dyn4d/core/fpenv.hpp"
#include "dyn4d/core/math.hpp"
#include "dyn4d/core/parallel.hpp"
#include "dyn4d/core/random.hpp"
#include "dyn4d/data/dataset.hpp"
#include "dyn4d/data/virtual_camera.hpp"
#include "dyn4d/fields/checkpoint.hpp"
#include "dyn4d/guidance/diffusion.hpp"
#include "dyn4d/guidance/remote.hpp"
#include "dyn4d/losses/losses.hpp"
#include "dyn4d/losses/schedule.hpp"
#include "dyn4d/render/disparity.hpp"
#include "dyn4d/render/image_ops.hpp"
#include "dyn4d/render/render.hpp"
#include "dyn4d/trainer/adam.hpp"
#include "dyn4d/trainer/config.hpp"

namespace dyn4d {

/// Builds the analytic provider's target latent for a virtual view at `time`, seen through the
/// crop `window` of the render and resized to `resolution`.
using GuidanceTargetFn =
    std::function<LatentTensor(const VirtualView& view, double time, const CropWindow& window, int resolution)>;

struct TrainHooks {
  std::shared_ptr<ScoreProvider> provider;  // overrides config.provider
  std::shared_ptr<LatentCodec> codec;       // identity when empty
  GuidanceTargetFn analytic_target;         // nearest-frame target when empty
  std::function<void(const LossReport&)> on_report;
};

struct TrainResult {
  SceneModel<float> model;
  std::vector<LossReport> log;
};

/// Per-pixel percentile normalization of a dense disparity map into [0,1].
inline Image<float> normalize_disparity_map(const Image<float>& disp) {
  std::vector<float> values(disp.data.begin(), disp.data.end());
  Image<float> out(disp.width, disp.height, 1);
  if (values.empty()) return out;
  const float lo = percentile<float>(values, 5.0), hi = percentile<float>(values, 95.0);
  for (std::size_t i = 0; i < disp.data.size(); ++i) {
    out.data[i] = std::clamp((disp.data[i] - lo) / (hi - lo + 1e-6f), 0.0f, 1.0f);
  }
  return out;
}

/// Target built from the dataset frame nearest in time, resampled to the render size and cropped
/// like the rendered view.
inline GuidanceTargetFn nearest_frame_target(const SceneDataset& ds, int render_width, int render_height) {
  return [&ds, render_width, render_height](const VirtualView&, double time, const CropWindow& win, int res) {
    const FrameRecord& f = ds.frames[ds.nearest_frame(time)];
    const auto rgb = resize_bilinear(crop(resize_bilinear(f.rgb, render_width, render_height), win), res, res);
    const auto disp = resize_bilinear(
        crop(resize_bilinear(normalize_disparity_map(f.disparity), render_width, render_height), win), res, res);
    return IdentityCodec().encode({rgb, disp});
  };
}

namespace detail {

struct ReferenceTerms {
  double rgb = 0.0, depth = 0.0, zvar = 0.0, decomp = 0.0, prop = 0.0;
  bool depth_degenerate = false;
};

/// Reconstruction losses on one batch of reference rays; gradients go straight into the model.
inline ReferenceTerms reference_step(SceneModel<float>& model, const FrameRecord& frame, const Aabb& box,
                                     const TrainConfig& cfg, const LossWeights& w, Rng& rng) {
  const int W = frame.camera.width, H = frame.camera.height;
  std::vector<PixelCoord> pixels(cfg.ray_batch);
  std::vector<std::size_t> pixel_index(cfg.ray_batch);
  for (int i = 0; i < cfg.ray_batch; ++i) {
    const std::size_t p = uniform_index(rng, static_cast<std::size_t>(W) * H);
    pixel_index[i] = p;
    pixels[i] = {static_cast<double>(p / W) + 0.5, static_cast<double>(p % W) + 0.5};
  }
  RenderOptions opt;
  opt.sampler.n_proposal = cfg.n_proposal;
  opt.sampler.n_fine = cfg.n_fine;
  opt.keep_proposal_cache = true;
  opt.keep_field_cache = static_cast<std::size_t>(cfg.ray_batch) * cfg.n_fine <= (std::size_t{1} << 17);
  const float time = static_cast<float>(frame.timestamp);
  auto batch = render_rays<float>(model, generate_rays(frame.camera, box, pixels, frame.timestamp), time, opt, rng);

  const std::size_t n = batch.rays.size(), nh = batch.hit_count();
  const int nf = batch.n_fine, np = batch.n_proposal;
  std::vector<BlendGrad<float>> grads(n);
  ReferenceTerms out;

  // L1 color.
  std::vector<float> rendered(3 * n), reference(3 * n), d_rgb(3 * n);
  for (std::size_t r = 0; r < n; ++r)
    for (int k = 0; k < 3; ++k) {
      rendered[3 * r + k] = batch.outputs[r].color[k];
      reference[3 * r + k] = frame.rgb.data[pixel_index[r] * 3 + k];
    }
  out.rgb = rgb_loss<float>(rendered, reference, d_rgb);
  for (std::size_t r = 0; r < n; ++r)
    for (int k = 0; k < 3; ++k) grads[r].color[k] += float(w.rgb) * d_rgb[3 * r + k];

  // Affine-invariant disparity.
  std::vector<float> disp(n, 0.0f), ref_disp(n), d_disp(n);
  std::vector<std::uint8_t> valid(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    ref_disp[r] = frame.disparity.data[pixel_index[r]];
    const auto& o = batch.outputs[r];
    if (batch.rays[r].hit && o.opacity > cfg.depth_opacity_threshold && o.depth > 0.0f) {
      valid[r] = 1;
      disp[r] = 1.0f / o.depth;
    }
  }
  const auto dl = depth_loss<float>(disp, ref_disp, valid, d_disp);
  out.depth = dl.value;
  out.depth_degenerate = dl.degenerate;
  for (std::size_t r = 0; r < n; ++r) {
    if (valid[r]) grads[r].depth += float(w.depth) * d_disp[r] * (-disp[r] * disp[r]);
  }

  // Depth variance along each hit ray, on unnormalized weights.
  std::vector<float> d_raw(nh * nf, 0.0f);
  double zvar = 0.0;
  for (std::size_t s = 0; s < nh; ++s) {
    const std::size_t r = batch.hit[s];
    float d_mu = 0.0f;
    zvar += z_variance<float>(batch.raw_weights_of(s), batch.samples(s).t, batch.outputs[r].depth,
                              std::span(d_raw).subspan(s * nf, nf), &d_mu, float(w.zvar / std::max<std::size_t>(nh, 1)));
    grads[r].depth += d_mu;
    grads[r].raw_weights = std::span<const float>(d_raw).subspan(s * nf, nf);
  }
  out.zvar = nh ? zvar / static_cast<double>(nh) : 0.0;

  // Skewed entropy over all fine samples.
  std::vector<float> d_ss(nh * nf, 0.0f), d_sd(nh * nf, 0.0f);
  out.decomp = decomposition_loss<float>(batch.sigma_s, batch.sigma_d, d_ss, d_sd);
  for (std::size_t i = 0; i < d_ss.size(); ++i) {
    d_ss[i] *= float(w.decomp);
    d_sd[i] *= float(w.decomp);
  }
  render_backward<float>(model, batch, grads, d_ss, d_sd);

  // Proposal coverage of the (detached) fine weights.
  std::vector<float> d_prop(nh * np, 0.0f);
  double prop = 0.0;
  for (std::size_t s = 0; s < nh; ++s) {
    prop += proposal_loss<float>(batch.prop_edges_of(s), batch.prop_weights_of(s), batch.samples(s).t,
                                 batch.raw_weights_of(s), std::span(d_prop).subspan(s * np, np),
                                 float(w.prop / std::max<std::size_t>(nh, 1)));
  }
  out.prop = nh ? prop / static_cast<double>(nh) : 0.0;
  proposal_backward<float>(model, batch, d_prop);
  return out;
}

struct GuidanceContext {
  ScoreProvider* provider = nullptr;
  AnalyticGaussianProvider* analytic = nullptr;
  const LatentCodec* codec = nullptr;
  GuidanceTargetFn target;
};

/// Score distillation on one virtual view; returns the mean squared noise residual.
inline double guidance_step(SceneModel<float>& model, const SceneDataset& ds, const TrainConfig& cfg,
                            const LossWeights& w, long iteration, GuidanceContext& g, Rng& rng) {
  const VirtualView vv = sample_virtual_view(ds, rng, cfg.perturbation_radius);
  const double time = uniform01(rng);
  const int RW = cfg.render_width, RH = cfg.render_height, G = cfg.guidance_resolution;
  const CameraPose cam = scale_camera(vv.camera, RW, RH);
  RenderOptions opt;
  opt.sampler.n_proposal = cfg.n_proposal;
  opt.sampler.n_fine = cfg.n_fine;
  auto batch = render_rays<float>(model, generate_rays(cam, model.aabb(), image_pixel_centers(RW, RH), time),
                                  static_cast<float>(time), opt, rng);
  const auto img = images_from_batch(batch, RW, RH);

  const int side = std::min(RW, RH);
  CropWindow win;
  win.size = side;
  win.row0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(RH - side + 1)));
  win.col0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(RW - side + 1)));
  const auto rgb_c = crop(img.rgb, win), depth_c = crop(img.depth, win), opacity_c = crop(img.opacity, win);

  std::optional<NormalizedDisparity<float>> nd;
  try {
    nd = depth_to_normalized_disparity(depth_c, opacity_c);
  } catch (const RenderError&) {
    // Nothing opaque in the crop yet: guide color only.
  }
  const Image<float> disp_c = nd ? nd->disparity : Image<float>(side, side, 1);
  const GuidanceView view{resize_bilinear(rgb_c, G, G), resize_bilinear(disp_c, G, G)};

  const long last = std::max(1L, cfg.iterations - 1);
  const int t_index = std::clamp(anneal_timestep(std::min(iteration, last), last, cfg.diffusion.n_steps,
                                                 cfg.anneal_start, cfg.anneal_end),
                                 0, cfg.diffusion.n_steps - 1);
  if (g.analytic) g.analytic->set_mean(g.target(vv, time, win, G));
  const SdsResult sds = sds_gradient(view, *g.codec, *g.provider, cfg.diffusion, t_index, rng, cfg.cfg_weight,
                                     cfg.condition);

  // Mean over latent elements, then back through resize, normalization and crop.
  const float scale = static_cast<float>(w.sds / (4.0 * G * G));
  Image<float> d_rgb_g = sds.grad.rgb, d_disp_g = sds.grad.disparity;
  for (float& v : d_rgb_g.data) v *= scale;
  for (float& v : d_disp_g.data) v *= scale;
  const auto d_rgb = crop_adjoint(resize_bilinear_adjoint(d_rgb_g, side, side), win, RW, RH);
  Image<float> d_depth(RW, RH, 1);
  if (nd) {
    const auto d_disp_c = resize_bilinear_adjoint(d_disp_g, side, side);
    d_depth = crop_adjoint(normalized_disparity_backward(depth_c, *nd, d_disp_c), win, RW, RH);
  }
  std::vector<BlendGrad<float>> grads(batch.rays.size());
  for (std::size_t p = 0; p < grads.size(); ++p) {
    for (int k = 0; k < 3; ++k) grads[p].color[k] = d_rgb.data[p * 3 + k];
    grads[p].depth = d_depth.data[p];
  }
  render_backward<float>(model, batch, grads);
  return sds.residual_sq;
}

inline bool grads_finite(const ParameterStore<float>& store) {
  bool ok = true;
  store.for_each([&](const Parameter<float>& p) {
    for (float g : p.grad) ok = ok && std::isfinite(g);
  });
  return ok;
}

}  // namespace detail

/// Optimizes a fresh model on `ds`. When `out_dir` is non-empty, writes train_log.jsonl and an
/// atomically replaced checkpoint.bin there.
inline TrainResult train(const SceneDataset& ds, const TrainConfig& cfg, const std::filesystem::path& out_dir = {},
                         TrainHooks hooks = {}) {
  cfg.validate();
  ds.validate();
  if (cfg.deterministic) set_worker_count(1);
  const FlushDenormals ftz;

  ModelConfig mcfg = cfg.model;
  mcfg.aabb = ds.aabb;
  mcfg.init_seed = cfg.seed;
  TrainResult result{SceneModel<float>(mcfg), {}};
  SceneModel<float>& model = result.model;
  AdamState<float> adam;
  Rng rng = derive_rng(cfg.seed, 0x747261696eULL);

  IdentityCodec identity;
  detail::GuidanceContext guide;
  guide.codec = hooks.codec ? hooks.codec.get() : &identity;
  std::unique_ptr<ScoreProvider> owned;
  if (hooks.provider) {
    guide.provider = hooks.provider.get();
  } else if (cfg.provider == "remote") {
    owned = std::make_unique<RemoteProvider>(RemoteOptions{cfg.endpoint, cfg.auth_token, cfg.diffusion});
    guide.provider = owned.get();
  } else {
    auto analytic = std::make_unique<AnalyticGaussianProvider>(LatentTensor(), cfg.diffusion);
    guide.analytic = analytic.get();
    guide.target = hooks.analytic_target ? hooks.analytic_target
                                         : nearest_frame_target(ds, cfg.render_width, cfg.render_height);
    owned = std::move(analytic);
    guide.provider = owned.get();
  }

  std::ofstream log_file;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log_file.open(out_dir / "train_log.jsonl", std::ios::trunc);
    if (!log_file) throw Error("cannot write " + (out_dir / "train_log.jsonl").string());
  }
  auto checkpoint = [&](long iteration) {
    if (out_dir.empty()) return;
    nlohmann::json meta = {{"iteration", iteration}, {"config", cfg}};
    save_checkpoint(model, out_dir / "checkpoint.bin", meta);
  };

  for (long it = 0; it < cfg.iterations; ++it) {
    const LossWeights w = schedule_weights(it, cfg.loss);
    model.parameters().zero_grad();
    LossReport rep;
    rep.iter = it;
    rep.weights = w;

    const FrameRecord& frame = ds.frames[uniform_index(rng, ds.size())];
    const auto terms = detail::reference_step(model, frame, ds.aabb, cfg, w, rng);
    rep.rgb = terms.rgb;
    rep.depth = terms.depth;
    rep.zvar = terms.zvar;
    rep.decomp = terms.decomp;
    rep.prop = terms.prop;
    rep.depth_degenerate = terms.depth_degenerate;
    if (w.sds > 0.0) rep.sds = detail::guidance_step(model, ds, cfg, w, it, guide, rng);
    rep.total = rep.weighted_total();

    if (const std::string bad = rep.non_finite_term(); !bad.empty()) {
      throw TrainingError("non-finite " + bad + " loss at iteration " + std::to_string(it));
    }
    if (!detail::grads_finite(model.parameters())) {
      throw TrainingError("non-finite gradient at iteration " + std::to_string(it));
    }
    adam_step(model.parameters(), adam, cfg.learning_rate, cfg.adam);

    const bool last = it + 1 == cfg.iterations;
    if (it % cfg.log_every == 0 || last) {
      result.log.push_back(rep);
      if (log_file) log_file << rep.to_json().dump() << '\n' << std::flush;
      if (hooks.on_report) hooks.on_report(rep);
    }
    if ((it + 1) % cfg.checkpoint_every == 0 || last) checkpoint(it + 1);
  }
  return result;
}

}  // namespace dyn4d
