#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dyn4d/core/error.hpp"
#include "dyn4d/core/io.hpp"
#include "dyn4d/data/dataset.hpp"
#include "dyn4d/render/render.hpp"
#include "dyn4d/trainer/metrics.hpp"

namespace dyn4d {

struct FrameScore {
  std::size_t frame = 0;
  double timestamp = 0.0;
  double ssim = 0.0;
  double psnr = 0.0;
  bool skipped = false;  // no covisible pixels
};

struct EvalReport {
  std::vector<FrameScore> frames;
  double mean_ssim = 0.0;
  double mean_psnr = 0.0;
  std::size_t evaluated = 0;

  nlohmann::json to_json() const {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& f : frames) {
      nlohmann::json j = {{"frame", f.frame}, {"timestamp", f.timestamp}, {"skipped", f.skipped}};
      if (!f.skipped) {
        j["ssim"] = f.ssim;
        j["psnr"] = f.psnr;
      }
      per.push_back(j);
    }
    return {{"frames", per}, {"mean_ssim", mean_ssim}, {"mean_psnr", mean_psnr}, {"evaluated", evaluated}};
  }
};

/// Samplers used for evaluation and trajectories: no jitter, so renders do not depend on the rng.
inline SamplerConfig eval_sampler(int n_proposal = 128, int n_fine = 64) {
  SamplerConfig s;
  s.n_proposal = n_proposal;
  s.n_fine = n_fine;
  s.jitter = false;
  return s;
}

/// Renders every frame at its own camera and timestamp and scores it against the frame image
/// over covisible pixels. Frames without covisible pixels are skipped with a warning.
template <typename T>
EvalReport evaluate(const SceneModel<T>& model, const SceneDataset& ds, const SamplerConfig& sampler = eval_sampler()) {
  EvalReport rep;
  Rng rng(0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const FrameRecord& f = ds.frames[i];
    FrameScore score;
    score.frame = i;
    score.timestamp = f.timestamp;
    const auto img = render_image<T>(model, f.camera, static_cast<T>(f.timestamp), f.camera.width, f.camera.height,
                                     rng, sampler);
    const Image<double> rendered = img.rgb.template cast<double>();
    const Image<double> target = f.rgb.cast<double>();
    const Mask* mask = f.covis_mask ? &*f.covis_mask : nullptr;
    const auto psnr = masked_psnr(rendered, target, mask);
    const auto ssim = masked_ssim(rendered, target, mask);
    if (!psnr || !ssim) {
      score.skipped = true;
      std::cerr << "warning: frame " << i << " has no covisible pixels, skipped\n";
    } else {
      score.psnr = *psnr;
      score.ssim = *ssim;
      rep.mean_psnr += *psnr;
      rep.mean_ssim += *ssim;
      ++rep.evaluated;
    }
    rep.frames.push_back(score);
  }
  if (rep.evaluated) {
    rep.mean_psnr /= static_cast<double>(rep.evaluated);
    rep.mean_ssim /= static_cast<double>(rep.evaluated);
  }
  return rep;
}

/// One trajectory frame: a camera and the time to render it at.
struct TrajectoryStop {
  CameraPose camera;
  double time = 0.0;
};

/// Bullet time: many cameras, one time.
inline std::vector<TrajectoryStop> bullet_time(const std::vector<CameraPose>& cameras, double time) {
  std::vector<TrajectoryStop> out;
  for (const auto& c : cameras) out.push_back({c, time});
  return out;
}

/// Stabilized view: one camera, many times.
inline std::vector<TrajectoryStop> stabilized_view(const CameraPose& camera, const std::vector<double>& times) {
  std::vector<TrajectoryStop> out;
  for (double t : times) out.push_back({camera, t});
  return out;
}

/// Renders each stop at its camera's resolution. With a non-empty `out_dir`, writes
/// frame_%04d.png and depth_%04d.f32 per stop.
template <typename T>
std::vector<RenderedImage<T>> render_trajectory(const SceneModel<T>& model, const std::vector<TrajectoryStop>& stops,
                                                const std::filesystem::path& out_dir = {},
                                                const SamplerConfig& sampler = eval_sampler()) {
  std::vector<RenderedImage<T>> frames;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  Rng rng(0);
  for (std::size_t i = 0; i < stops.size(); ++i) {
    const auto& s = stops[i];
    s.camera.validate();
    auto img = render_image<T>(model, s.camera, static_cast<T>(s.time), s.camera.width, s.camera.height, rng, sampler);
    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%04zu.png", i);
      write_png(out_dir / name, img.rgb);
      std::snprintf(name, sizeof(name), "depth_%04zu.f32", i);
      write_f32<T>(out_dir / name, img.depth.data);
    }
    frames.push_back(std::move(img));
  }
  return frames;
}

}  // namespace dyn4d
