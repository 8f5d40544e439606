#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "dyn4d/data/camera.hpp"

namespace dyn4d {

/// Continuous pixel coordinate. Integer values land on the principal-point grid, so pixel
/// centers of an image are at (r + 0.5, c + 0.5) when cx = width / 2.
struct PixelCoord {
  double row = 0.0;
  double col = 0.0;
};

struct Ray {
  Vec3d origin = Vec3d::Zero();
  Vec3d direction = Vec3d(0, 0, -1);
  double t_near = 0.0;
  double t_far = 0.0;
  double time = 0.0;
  bool hit = false;  // false: the ray misses the box inside [near, far]
};

/// Camera-space direction (unnormalized) through a pixel coordinate.
inline Vec3d camera_direction(const CameraPose& cam, const PixelCoord& px) {
  return Vec3d((px.col - cam.cx) / cam.fx, -(px.row - cam.cy) / cam.fy, -1.0);
}

/// Slab test. Returns the entry/exit parameters, or an empty interval when the line misses.
inline std::pair<double, double> intersect_aabb(const Vec3d& origin, const Vec3d& dir, const Aabb& box) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (origin[a] < box.min[a] || origin[a] > box.max[a]) return {1.0, 0.0};
      continue;
    }
    const double inv = 1.0 / dir[a];
    double ta = (box.min[a] - origin[a]) * inv;
    double tb = (box.max[a] - origin[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return {t0, t1};
}

inline Ray generate_ray(const CameraPose& cam, const Aabb& box, const PixelCoord& px, double timestamp) {
  Ray ray;
  ray.origin = cam.translation;
  ray.direction = (cam.rotation * camera_direction(cam, px)).normalized();
  ray.time = timestamp;
  const auto [t0, t1] = intersect_aabb(ray.origin, ray.direction, box);
  ray.t_near = std::max(t0, cam.near);
  ray.t_far = std::min(t1, cam.far);
  ray.hit = ray.t_far > ray.t_near;
  if (!ray.hit) ray.t_near = ray.t_far = 0.0;
  return ray;
}

/// One ray per pixel coordinate, origin at the camera center, unit direction, and the
/// ray/box interval clipped to the camera's [near, far].
inline std::vector<Ray> generate_rays(const CameraPose& cam, const Aabb& box, std::span<const PixelCoord> pixels,
                                      double timestamp) {
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const auto& px : pixels) rays.push_back(generate_ray(cam, box, px, timestamp));
  return rays;
}

/// Pixel-center coordinates of a full image in row-major order.
inline std::vector<PixelCoord> image_pixel_centers(int width, int height) {
  std::vector<PixelCoord> px;
  px.reserve(static_cast<std::size_t>(width) * height);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) px.push_back({r + 0.5, c + 0.5});
  return px;
}

/// Projects a world point into continuous pixel coordinates. Points behind the camera give
/// negative depth, reported through `depth`.
inline PixelCoord project(const CameraPose& cam, const Vec3d& world, double* depth = nullptr) {
  const Vec3d p = cam.rotation.transpose() * (world - cam.translation);
  const double z = -p.z();
  if (depth) *depth = z;
  return {cam.cy - cam.fy * p.y() / z, cam.cx + cam.fx * p.x() / z};
}

}  // namespace dyn4d
