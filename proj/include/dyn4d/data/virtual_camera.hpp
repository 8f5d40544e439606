#pragma once

#include <cmath>
#include <cstdint>

#include "dyn4d/core/random.hpp"
#include "dyn4d/data/dataset.hpp"

namespace dyn4d {

struct VirtualView {
  CameraPose camera;
  std::size_t source_frame = 0;  // frame whose camera was perturbed
};

/// Point on the original optical axis closest to the box center. Falls back to a point at the
/// center's distance along the axis when the center lies behind the camera.
inline Vec3d look_at_point(const CameraPose& cam, const Aabb& box) {
  const Vec3d axis = cam.forward();
  const Vec3d to_center = box.center() - cam.center();
  double s = to_center.dot(axis);
  if (s <= cam.near) s = std::max(to_center.norm(), cam.near);
  return cam.center() + s * axis;
}

/// Picks a frame uniformly, displaces its camera center uniformly inside a ball of radius
/// `radius_fraction` * box diagonal, and re-aims the camera at the original look-at point.
inline VirtualView sample_virtual_view(const SceneDataset& ds, Rng& rng, double radius_fraction = 0.1) {
  if (ds.empty()) throw ValidationError("sample_virtual_camera: dataset is empty");
  VirtualView view;
  view.source_frame = uniform_index(rng, ds.size());
  const CameraPose& src = ds.frames[view.source_frame].camera;
  view.camera = src;
  if (radius_fraction <= 0.0) return view;

  Vec3d dir;
  do {
    dir = Vec3d(standard_normal(rng), standard_normal(rng), standard_normal(rng));
  } while (dir.norm() < 1e-12);
  const double radius = radius_fraction * ds.aabb.diagonal() * std::cbrt(uniform01(rng));
  const Vec3d target = look_at_point(src, ds.aabb);
  view.camera.translation = src.translation + radius * dir.normalized();
  view.camera.rotation = look_at_rotation(view.camera.translation, target, src.up());
  return view;
}

inline CameraPose sample_virtual_camera(const SceneDataset& ds, std::uint64_t seed, double radius_fraction = 0.1) {
  Rng rng(seed);
  return sample_virtual_view(ds, rng, radius_fraction).camera;
}

}  // namespace dyn4d
