#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dyn4d/core/error.hpp"
#include "dyn4d/core/image.hpp"
#include "dyn4d/core/io.hpp"
#include "dyn4d/data/camera.hpp"
#include "dyn4d/data/rays.hpp"
#include "json.hpp"

namespace dyn4d {

/// One observed video frame.
struct FrameRecord {
  Image<float> rgb;        // H x W x 3, linear [0,1]
  Image<float> disparity;  // H x W x 1, affine-invariant
  double timestamp = 0.0;  // normalized video time in [0,1]
  CameraPose camera;
  std::optional<Mask> covis_mask;  // nonzero = covisible

  bool covisible(int row, int col) const { return !covis_mask || (*covis_mask)(row, col) != 0; }

  void validate() const {
    camera.validate();
    if (rgb.channels != 3 || rgb.width != camera.width || rgb.height != camera.height) {
      throw ValidationError("rgb image shape does not match camera resolution");
    }
    if (!disparity.same_shape(Image<float>(rgb.width, rgb.height, 1))) {
      throw ValidationError("disparity shape " + std::to_string(disparity.width) + "x" +
                            std::to_string(disparity.height) + " does not match rgb shape " +
                            std::to_string(rgb.width) + "x" + std::to_string(rgb.height));
    }
    if (covis_mask && (covis_mask->width != rgb.width || covis_mask->height != rgb.height)) {
      throw ValidationError("covisibility mask shape does not match rgb shape");
    }
    for (float v : rgb.data)
      if (!(v >= 0.0f && v <= 1.0f)) throw ValidationError("rgb values must lie in [0,1]");
    if (!all_finite<float>(disparity.data)) throw ValidationError("disparity contains NaN or Inf");
    if (!(timestamp >= 0.0 && timestamp <= 1.0)) throw ValidationError("timestamp must lie in [0,1]");
  }
};

/// True when some ray of a 5x5 grid over the image plane enters the box inside [near, far].
inline bool frustum_intersects(const CameraPose& cam, const Aabb& box) {
  for (int i = 0; i <= 4; ++i) {
    for (int j = 0; j <= 4; ++j) {
      const PixelCoord px{cam.height * i / 4.0, cam.width * j / 4.0};
      if (generate_ray(cam, box, px, 0.0).hit) return true;
    }
  }
  return false;
}

struct SceneDataset {
  std::vector<FrameRecord> frames;  // sorted by timestamp
  Aabb aabb;

  bool empty() const { return frames.empty(); }
  std::size_t size() const { return frames.size(); }

  void validate() const {
    aabb.validate();
    for (std::size_t i = 0; i < frames.size(); ++i) {
      frames[i].validate();
      if (i > 0 && frames[i].timestamp < frames[i - 1].timestamp) {
        throw ValidationError("frames must be sorted by timestamp");
      }
      if (!frustum_intersects(frames[i].camera, aabb)) {
        throw ValidationError("frame " + std::to_string(i) + ": camera frustum does not intersect the scene box");
      }
    }
  }

  /// Index of the frame whose timestamp is closest to `t` (first one on ties).
  std::size_t nearest_frame(double t) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < frames.size(); ++i) {
      if (std::abs(frames[i].timestamp - t) < std::abs(frames[best].timestamp - t)) best = i;
    }
    return best;
  }
};

namespace detail {

inline std::string frame_file(const char* dir, long id, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s/frame_%04ld.%s", dir, id, ext);
  return buf;
}

inline nlohmann::json camera_to_json(const CameraPose& cam) {
  nlohmann::json j;
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["intrinsics"] = {cam.fx, cam.fy, cam.cx, cam.cy};
  std::vector<double> rot;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(cam.rotation(r, c));
  j["rotation"] = rot;
  j["translation"] = {cam.translation.x(), cam.translation.y(), cam.translation.z()};
  j["near"] = cam.near;
  j["far"] = cam.far;
  return j;
}

inline CameraPose camera_from_json(const nlohmann::json& j) {
  CameraPose cam;
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  const auto intr = j.at("intrinsics").get<std::vector<double>>();
  const auto rot = j.at("rotation").get<std::vector<double>>();
  const auto tr = j.at("translation").get<std::vector<double>>();
  if (intr.size() != 4 || rot.size() != 9 || tr.size() != 3) {
    throw ValidationError("camera needs 4 intrinsics, 9 rotation and 3 translation values");
  }
  cam.fx = intr[0];
  cam.fy = intr[1];
  cam.cx = intr[2];
  cam.cy = intr[3];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rot[r * 3 + c];
  cam.translation = Vec3d(tr[0], tr[1], tr[2]);
  cam.near = j.at("near").get<double>();
  cam.far = j.at("far").get<double>();
  return cam;
}

inline Aabb aabb_from_json(const nlohmann::json& j) {
  const auto lo = j.at("min").get<std::vector<double>>();
  const auto hi = j.at("max").get<std::vector<double>>();
  if (lo.size() != 3 || hi.size() != 3) throw ValidationError("aabb min/max must have 3 values");
  return {Vec3d(lo[0], lo[1], lo[2]), Vec3d(hi[0], hi[1], hi[2])};
}

inline nlohmann::json aabb_to_json(const Aabb& box) {
  return {{"min", {box.min.x(), box.min.y(), box.min.z()}}, {"max", {box.max.x(), box.max.y(), box.max.z()}}};
}

inline Mask read_mask(const std::filesystem::path& path) {
  const Image<float> gray = read_png(path, 1);
  Mask mask(gray.width, gray.height, 1);
  for (std::size_t i = 0; i < gray.data.size(); ++i) mask.data[i] = quantize_u8(gray.data[i]) > 127 ? 1 : 0;
  return mask;
}

}  // namespace detail

/// Loads `root/manifest.json` and the per-frame files it names.
///
/// Each frame entry carries `width`, `height`, `intrinsics` [fx, fy, cx, cy], row-major
/// `rotation` (9), `translation` (3), `near`, `far`, and either a `timestamp` in [0,1] or an
/// integer `frame_id`. When timestamps are absent they become rank / (N - 1) over the frame
/// ids. File names default to `rgb/frame_%04d.png`, `disp/frame_%04d.f32` and (optionally)
/// `mask/frame_%04d.png`, keyed by `frame_id` or the list position.
inline SceneDataset load_dataset(const std::filesystem::path& root) {
  const auto manifest_path = root / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw LoadError("missing file: manifest.json in " + root.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("manifest.json: ") + e.what());
  }

  SceneDataset ds;
  const auto& frames = manifest.at("frames");
  const std::size_t n = frames.size();
  bool explicit_time = true;
  for (const auto& f : frames) explicit_time = explicit_time && f.contains("timestamp");

  std::vector<std::pair<long, std::size_t>> order;  // (frame_id, position)
  for (std::size_t i = 0; i < n; ++i) {
    order.emplace_back(frames[i].value("frame_id", static_cast<long>(i)), i);
  }
  std::vector<double> rank_time(n, 0.0);
  {
    auto sorted = order;
    std::stable_sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.first < b.first; });
    for (std::size_t k = 0; k < n; ++k) rank_time[sorted[k].second] = n > 1 ? double(k) / double(n - 1) : 0.0;
  }

  try {
    ds.aabb = detail::aabb_from_json(manifest.at("aabb"));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& f = frames[i];
      const long id = order[i].first;
      FrameRecord rec;
      rec.camera = detail::camera_from_json(f);
      rec.timestamp = explicit_time ? f.at("timestamp").get<double>() : rank_time[i];

      const std::string rgb_name = f.value("rgb", detail::frame_file("rgb", id, "png"));
      const std::string disp_name = f.value("disp", detail::frame_file("disp", id, "f32"));
      const auto rgb_path = root / rgb_name;
      const auto disp_path = root / disp_name;
      if (!std::filesystem::exists(rgb_path)) throw LoadError("missing file: " + rgb_name);
      if (!std::filesystem::exists(disp_path)) throw LoadError("missing file: " + disp_name);

      rec.rgb = read_png(rgb_path, 3);
      if (rec.rgb.width != rec.camera.width || rec.rgb.height != rec.camera.height) {
        throw ValidationError(rgb_name + ": image is " + std::to_string(rec.rgb.width) + "x" +
                              std::to_string(rec.rgb.height) + " but the manifest says " +
                              std::to_string(rec.camera.width) + "x" + std::to_string(rec.camera.height));
      }
      const auto disp_bytes = std::filesystem::file_size(disp_path);
      if (disp_bytes != rec.rgb.pixel_count() * sizeof(float)) {
        throw ValidationError(disp_name + ": disparity has " + std::to_string(disp_bytes / sizeof(float)) +
                              " values, rgb has " + std::to_string(rec.rgb.pixel_count()) + " pixels");
      }
      rec.disparity = Image<float>(rec.rgb.width, rec.rgb.height, 1);
      rec.disparity.data = read_f32(disp_path, rec.rgb.pixel_count());

      if (f.contains("mask")) {
        const std::string mask_name = f.at("mask").get<std::string>();
        if (!std::filesystem::exists(root / mask_name)) throw LoadError("missing file: " + mask_name);
        rec.covis_mask = detail::read_mask(root / mask_name);
      } else if (auto default_mask = root / detail::frame_file("mask", id, "png"); std::filesystem::exists(default_mask)) {
        rec.covis_mask = detail::read_mask(default_mask);
      }
      ds.frames.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest.json: ") + e.what());
  }

  std::stable_sort(ds.frames.begin(), ds.frames.end(),
                   [](const FrameRecord& a, const FrameRecord& b) { return a.timestamp < b.timestamp; });
  ds.validate();
  return ds;
}

/// Writes a dataset in the layout `load_dataset` reads. RGB is quantized to 8 bits, so a
/// save/load round trip is exact when the rgb values are already multiples of 1/255.
inline void save_dataset(const SceneDataset& ds, const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "rgb");
  std::filesystem::create_directories(root / "disp");
  nlohmann::json manifest;
  manifest["aabb"] = detail::aabb_to_json(ds.aabb);
  manifest["frames"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    const auto& rec = ds.frames[i];
    nlohmann::json f = detail::camera_to_json(rec.camera);
    f["frame_id"] = i;
    f["timestamp"] = rec.timestamp;
    f["rgb"] = detail::frame_file("rgb", static_cast<long>(i), "png");
    f["disp"] = detail::frame_file("disp", static_cast<long>(i), "f32");
    write_png(root / f["rgb"].get<std::string>(), rec.rgb);
    write_f32<float>(root / f["disp"].get<std::string>(), rec.disparity.data);
    if (rec.covis_mask) {
      std::filesystem::create_directories(root / "mask");
      f["mask"] = detail::frame_file("mask", static_cast<long>(i), "png");
      Image<float> m(rec.covis_mask->width, rec.covis_mask->height, 1);
      for (std::size_t k = 0; k < m.data.size(); ++k) m.data[k] = rec.covis_mask->data[k] ? 1.0f : 0.0f;
      write_png(root / f["mask"].get<std::string>(), m);
    }
    manifest["frames"].push_back(std::move(f));
  }
  write_file_atomic(root / "manifest.json", manifest.dump(2));
}

}  // namespace dyn4d
