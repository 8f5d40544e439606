#pragma once

#include <cmath>
#include <string>

#include "dyn4d/core/error.hpp"
#include "dyn4d/core/math.hpp"

namespace dyn4d {

using Vec3d = Vec3<double>;
using Mat3d = Mat3<double>;

/// Pinhole camera. Camera space follows the OpenGL convention: x right, y up, looking down -z.
/// `rotation` maps camera-space directions to world space; `translation` is the camera center.
struct CameraPose {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3d rotation = Mat3d::Identity();
  Vec3d translation = Vec3d::Zero();
  int width = 1;
  int height = 1;
  double near = 0.01;
  double far = 100.0;

  Vec3d center() const { return translation; }
  Vec3d forward() const { return -rotation.col(2); }
  Vec3d up() const { return rotation.col(1); }

  /// Throws ValidationError when an invariant does not hold.
  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw ValidationError("camera resolution must be positive");
    if (!(near > 0.0) || !(far > near)) throw ValidationError("camera bounds must satisfy 0 < near < far");
    const double ortho = (rotation.transpose() * rotation - Mat3d::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho <= 1e-5) || !(std::abs(rotation.determinant() - 1.0) <= 1e-5)) {
      throw ValidationError("camera rotation is not orthonormal with determinant +1");
    }
  }

  friend bool operator==(const CameraPose&, const CameraPose&) = default;
};

/// Rotation whose optical axis (-z) points from `eye` to `target`, keeping `up_hint` as close to +y as possible.
inline Mat3d look_at_rotation(const Vec3d& eye, const Vec3d& target, const Vec3d& up_hint) {
  const Vec3d forward = (target - eye).normalized();
  Vec3d right = forward.cross(up_hint);
  if (right.norm() < 1e-9) right = forward.cross(std::abs(forward.x()) < 0.9 ? Vec3d::UnitX() : Vec3d::UnitY());
  right.normalize();
  const Vec3d up = right.cross(forward);
  Mat3d r;
  r.col(0) = right;
  r.col(1) = up;
  r.col(2) = -forward;
  return r;
}

struct Aabb {
  Vec3d min = Vec3d::Constant(-1.0);
  Vec3d max = Vec3d::Constant(1.0);

  Vec3d center() const { return 0.5 * (min + max); }
  Vec3d extent() const { return max - min; }
  double diagonal() const { return extent().norm(); }

  void validate() const {
    if (!((max - min).minCoeff() > 0.0)) throw ValidationError("aabb must have positive extent on every axis");
  }

  friend bool operator==(const Aabb&, const Aabb&) = default;
};

}  // namespace dyn4d
