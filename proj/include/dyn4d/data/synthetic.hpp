#pragma once

#include <cmath>
#include <limits>
#include <optional>

#include "dyn4d/core/io.hpp"
#include "dyn4d/data/dataset.hpp"

namespace dyn4d {

/// Analytic test scene inside the box [-1,1]^3: a textured back wall and floor (static) and an
/// optional axis-aligned cube sliding along x with time (dynamic). Used to generate ground
/// truth for tests and demos.
struct SyntheticScene {
  double wall_z = -0.7;
  double floor_y = -0.7;
  bool with_box = true;
  double box_half = 0.22;
  double box_x_start = -0.5;
  double box_x_end = 0.5;
  Vec3d box_color = Vec3d(0.9, 0.15, 0.1);

  Vec3d box_center(double t) const {
    return {box_x_start + (box_x_end - box_x_start) * t, floor_y + box_half, 0.0};
  }

  struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vec3d color = Vec3d::Zero();
    bool dynamic = false;
    bool valid = false;
  };

  Vec3d wall_color(const Vec3d& p) const {
    return {0.55 + 0.25 * std::sin(2.5 * p.x() + 0.5), 0.5 + 0.2 * std::cos(2.0 * p.y()),
            0.45 + 0.2 * std::sin(1.5 * (p.x() + p.y()))};
  }
  Vec3d floor_color(const Vec3d& p) const {
    return {0.35 + 0.15 * std::cos(2.0 * p.x()), 0.4 + 0.15 * std::sin(2.5 * p.z()), 0.3};
  }

  Hit trace(const Vec3d& o, const Vec3d& d, double time) const {
    Hit best;
    auto consider = [&](double t, const Vec3d& color, bool dyn) {
      if (t > 1e-9 && t < best.t) best = {t, color, dyn, true};
    };
    if (std::abs(d.z()) > 1e-12) {
      const double t = (wall_z - o.z()) / d.z();
      const Vec3d p = o + t * d;
      if (std::abs(p.x()) <= 1.0 && p.y() >= floor_y && p.y() <= 1.0) consider(t, wall_color(p), false);
    }
    if (std::abs(d.y()) > 1e-12) {
      const double t = (floor_y - o.y()) / d.y();
      const Vec3d p = o + t * d;
      if (std::abs(p.x()) <= 1.0 && p.z() >= wall_z && p.z() <= 1.0) consider(t, floor_color(p), false);
    }
    if (with_box) {
      const Vec3d c = box_center(time);
      const Aabb box{c - Vec3d::Constant(box_half), c + Vec3d::Constant(box_half)};
      const auto [t0, t1] = intersect_aabb(o, d, box);
      if (t1 >= t0 && t0 > 0.0) {
        const Vec3d p = o + t0 * d;
        // Face shading keeps the faces distinguishable.
        const Vec3d local = (p - c) / box_half;
        int axis = 0;
        local.cwiseAbs().maxCoeff(&axis);
        const double shade = axis == 1 ? 1.0 : (axis == 0 ? 0.8 : 0.9);
        consider(t0, box_color * shade, true);
      }
    }
    return best;
  }

  struct View {
    Image<float> rgb;
    Image<float> depth;
    Mask dynamic_mask;
  };

  /// Ray-casts one pixel-center ray per pixel. RGB is quantized to multiples of 1/255.
  View render(const CameraPose& cam, double time) const {
    View v{Image<float>(cam.width, cam.height, 3), Image<float>(cam.width, cam.height, 1),
           Mask(cam.width, cam.height, 1)};
    for (int r = 0; r < cam.height; ++r) {
      for (int c = 0; c < cam.width; ++c) {
        const Vec3d dir = (cam.rotation * camera_direction(cam, {r + 0.5, c + 0.5})).normalized();
        const Hit h = trace(cam.translation, dir, time);
        for (int k = 0; k < 3; ++k) v.rgb(r, c, k) = quantize_u8(h.color[k]) / 255.0f;
        v.depth(r, c) = h.valid ? static_cast<float>(h.t) : 0.0f;
        v.dynamic_mask(r, c) = h.dynamic ? 1 : 0;
      }
    }
    return v;
  }
};

struct SyntheticSequenceOptions {
  int n_frames = 16;
  int width = 64;
  int height = 64;
  double focal = 80.0;
  double camera_distance = 2.6;
  double camera_sway = 0.3;  // lateral camera travel over the sequence
  bool with_box = true;
};

inline CameraPose synthetic_camera(const SyntheticSequenceOptions& opt, double sway_phase) {
  CameraPose cam;
  cam.width = opt.width;
  cam.height = opt.height;
  cam.fx = cam.fy = opt.focal * opt.width / 64.0;
  cam.cx = opt.width / 2.0;
  cam.cy = opt.height / 2.0;
  cam.translation = Vec3d(opt.camera_sway * sway_phase, 0.15, opt.camera_distance);
  cam.rotation = look_at_rotation(cam.translation, Vec3d(0.0, -0.15, -0.2), Vec3d::UnitY());
  cam.near = 0.1;
  cam.far = 10.0;
  return cam;
}

/// Frames at timestamps i / (n - 1), camera sliding from -sway/2 to +sway/2, disparity = 1/depth.
/// `dynamic_masks`, when given, receives the ground-truth box mask of each frame.
inline SceneDataset make_synthetic_sequence(const SyntheticSequenceOptions& opt, const SyntheticScene& scene,
                                            std::vector<Mask>* dynamic_masks = nullptr) {
  SceneDataset ds;
  ds.aabb = Aabb{Vec3d::Constant(-1.0), Vec3d::Constant(1.0)};
  for (int i = 0; i < opt.n_frames; ++i) {
    const double t = opt.n_frames > 1 ? double(i) / double(opt.n_frames - 1) : 0.0;
    FrameRecord rec;
    rec.timestamp = t;
    rec.camera = synthetic_camera(opt, opt.n_frames > 1 ? t - 0.5 : 0.0);
    auto view = scene.render(rec.camera, t);
    rec.rgb = std::move(view.rgb);
    rec.disparity = Image<float>(opt.width, opt.height, 1);
    for (std::size_t k = 0; k < rec.disparity.data.size(); ++k) {
      rec.disparity.data[k] = view.depth.data[k] > 0.0f ? 1.0f / view.depth.data[k] : 0.0f;
    }
    if (dynamic_masks) dynamic_masks->push_back(std::move(view.dynamic_mask));
    ds.frames.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace dyn4d
