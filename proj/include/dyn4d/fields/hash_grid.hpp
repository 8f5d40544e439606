#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dyn4d/core/error.hpp"
#include "dyn4d/core/math.hpp"
#include "dyn4d/core/parallel.hpp"
#include "dyn4d/core/random.hpp"
#include "dyn4d/fields/parameter_store.hpp"
#include "json.hpp"

namespace dyn4d {

struct HashGridConfig {
  int n_levels = 16;
  int n_features_per_level = 2;
  int log2_hashmap_size = 19;
  int base_resolution = 16;
  double per_level_scale = 1.447;

  /// Radiance-field grids.
  static HashGridConfig radiance() { return {16, 2, 19, 16, 1.447}; }
  /// Density-proposal grids.
  static HashGridConfig proposal() { return {8, 2, 19, 16, 1.447}; }

  int output_dim() const { return n_levels * n_features_per_level; }

  void validate() const {
    if (n_levels < 1) throw ValidationError("hash grid: n_levels must be >= 1");
    if (n_features_per_level < 1) throw ValidationError("hash grid: n_features_per_level must be >= 1");
    if (!(per_level_scale > 1.0)) throw ValidationError("hash grid: per_level_scale must be > 1");
    if (base_resolution < 2) throw ValidationError("hash grid: base_resolution must be >= 2");
    if (log2_hashmap_size < 1 || log2_hashmap_size > 30) throw ValidationError("hash grid: log2_hashmap_size out of range");
  }

  friend bool operator==(const HashGridConfig&, const HashGridConfig&) = default;
  NLOHMANN_DEFINE_TYPE_INTRUSIVE_WITH_DEFAULT(HashGridConfig, n_levels, n_features_per_level, log2_hashmap_size,
                                              base_resolution, per_level_scale)
};

/// Vertices per axis at a level.
inline std::uint32_t grid_level_resolution(const HashGridConfig& cfg, int level) {
  return static_cast<std::uint32_t>(std::floor(cfg.base_resolution * std::pow(cfg.per_level_scale, level)));
}

/// Rows in a level's feature table: dense when the lattice fits, hashed otherwise.
inline std::size_t grid_table_size(const HashGridConfig& cfg, int level) {
  const std::uint64_t r = grid_level_resolution(cfg, level);
  const std::uint64_t dense = r * r * r;
  const std::uint64_t hashed = std::uint64_t{1} << cfg.log2_hashmap_size;
  return static_cast<std::size_t>(std::min(dense, hashed));
}

/// Lattice vertex -> table row. XOR of per-axis products with (1, 2654435761, 805459861) in
/// 32-bit arithmetic when hashed; x + R*(y + R*z) when dense.
inline std::uint32_t grid_vertex_index(std::uint32_t x, std::uint32_t y, std::uint32_t z, std::uint32_t resolution,
                                       std::size_t table_size) {
  const std::uint64_t r = resolution;
  if (r * r * r <= table_size) return static_cast<std::uint32_t>(x + r * (y + r * z));
  const std::uint32_t h = x ^ (y * 2654435761u) ^ (z * 805459861u);
  return h & static_cast<std::uint32_t>(table_size - 1);
}

/// Multiresolution hash encoding over the unit cube. Each level interpolates trilinearly
/// between the 8 lattice vertices around the query; levels are concatenated.
template <typename T>
class HashGrid {
 public:
  HashGrid(const HashGridConfig& cfg, ParameterStore<T>& store, const std::string& prefix) : cfg_(cfg) {
    cfg_.validate();
    for (int l = 0; l < cfg_.n_levels; ++l) {
      const std::size_t rows = grid_table_size(cfg_, l);
      char name[32];
      std::snprintf(name, sizeof(name), ".level%02d", l);
      tables_.push_back(
          &store.add(prefix + name, {rows, static_cast<std::size_t>(cfg_.n_features_per_level)}));
      const std::uint32_t res = grid_level_resolution(cfg_, l);
      const std::uint64_t r = res;
      levels_.push_back({res, static_cast<T>(res - 1), r * r * r <= rows, static_cast<std::uint32_t>(rows - 1)});
    }
  }

  const HashGridConfig& config() const { return cfg_; }
  int output_dim() const { return cfg_.output_dim(); }
  std::uint32_t resolution(int level) const { return levels_[level].res; }
  Parameter<T>& table(int level) { return *tables_[level]; }
  const Parameter<T>& table(int level) const { return *tables_[level]; }

  /// Table entries ~ U(-scale, scale).
  void init(Rng& rng, double scale = 1e-4) {
    for (auto* t : tables_)
      for (auto& v : t->value) v = static_cast<T>(uniform(rng, -scale, scale));
  }

  struct Corners {
    std::array<std::uint32_t, 8> row;
    std::array<T, 8> weight;
    std::array<T, 3> frac;
  };

  /// Lattice cell and trilinear weights for one point at one level. Points are clamped to [0,1].
  Corners corners(const Vec3<T>& point, int level) const {
    const Level& lv = levels_[level];
    std::uint32_t b[3];
    Corners c;
    for (int a = 0; a < 3; ++a) {
      T x = point[a];
      x = x < T(0) ? T(0) : (x > T(1) ? T(1) : x);
      const T p = x * lv.scale;
      std::uint32_t fl = static_cast<std::uint32_t>(p);
      if (fl > lv.res - 2) fl = lv.res - 2;
      b[a] = fl;
      c.frac[a] = p - static_cast<T>(fl);
    }
    if (lv.dense) {
      const std::uint32_t r = lv.res, r2 = r * r;
      const std::uint32_t i0 = b[0] + r * b[1] + r2 * b[2];
      c.row = {i0, i0 + 1, i0 + r, i0 + r + 1, i0 + r2, i0 + r2 + 1, i0 + r2 + r, i0 + r2 + r + 1};
    } else {
      const std::uint32_t y0 = b[1] * 2654435761u, y1 = (b[1] + 1) * 2654435761u;
      const std::uint32_t z0 = b[2] * 805459861u, z1 = (b[2] + 1) * 805459861u;
      const std::uint32_t x0 = b[0], x1 = b[0] + 1, m = lv.mask;
      c.row = {(x0 ^ y0 ^ z0) & m, (x1 ^ y0 ^ z0) & m, (x0 ^ y1 ^ z0) & m, (x1 ^ y1 ^ z0) & m,
               (x0 ^ y0 ^ z1) & m, (x1 ^ y0 ^ z1) & m, (x0 ^ y1 ^ z1) & m, (x1 ^ y1 ^ z1) & m};
    }
    const T fx = c.frac[0], fy = c.frac[1], fz = c.frac[2];
    const T gx = T(1) - fx, gy = T(1) - fy, gz = T(1) - fz;
    c.weight = {gx * gy * gz, fx * gy * gz, gx * fy * gz, fx * fy * gz,
                gx * gy * fz, fx * gy * fz, gx * fy * fz, fx * fy * fz};
    return c;
  }

  /// Encodes `points` into `out`, laid out point-major: out[p * output_dim() + l * F + f].
  void encode(std::span<const Vec3<T>> points, T* out) const {
    const int F = cfg_.n_features_per_level;
    const int dim = output_dim();
    parallel_chunks(points.size(), 4096, [&](std::size_t begin, std::size_t end) {
      for (std::size_t p = begin; p < end; ++p) {
        T* dst = out + p * dim;
        for (int l = 0; l < cfg_.n_levels; ++l) {
          const Corners c = corners(points[p], l);
          const T* table = tables_[l]->value.data();
          for (int f = 0; f < F; ++f) {
            T acc = T(0);
            for (int k = 0; k < 8; ++k) acc += c.weight[k] * table[std::size_t(c.row[k]) * F + f];
            dst[l * F + f] = acc;
          }
        }
      }
    });
  }

  /// Accumulates d loss / d table into the table gradients given d loss / d encoding (same
  /// layout as `encode`). Work is split by level, so every table row has a single writer and
  /// the summation order is fixed. Optionally writes d loss / d point.
  void backward(std::span<const Vec3<T>> points, const T* d_out, Vec3<T>* d_points = nullptr) {
    const int F = cfg_.n_features_per_level;
    const int dim = output_dim();
    parallel_for(static_cast<std::size_t>(cfg_.n_levels), [&](std::size_t level) {
      const int l = static_cast<int>(level);
      T* grad = tables_[l]->grad.data();
      for (std::size_t p = 0; p < points.size(); ++p) {
        const Corners c = corners(points[p], l);
        const T* g = d_out + p * dim + l * F;
        for (int k = 0; k < 8; ++k)
          for (int f = 0; f < F; ++f) grad[std::size_t(c.row[k]) * F + f] += c.weight[k] * g[f];
      }
    });
    if (!d_points) return;
    for (std::size_t p = 0; p < points.size(); ++p) {
      Vec3<T> dp = Vec3<T>::Zero();
      for (int l = 0; l < cfg_.n_levels; ++l) {
        const Corners c = corners(points[p], l);
        const T* table = tables_[l]->value.data();
        const T* g = d_out + p * dim + l * F;
        const T scale = levels_[l].scale;
        for (int k = 0; k < 8; ++k) {
          T s = T(0);
          for (int f = 0; f < F; ++f) s += table[std::size_t(c.row[k]) * F + f] * g[f];
          for (int a = 0; a < 3; ++a) {
            T dw = scale;
            for (int q = 0; q < 3; ++q) {
              const bool hi = (k >> q) & 1;
              if (q == a) dw *= hi ? T(1) : T(-1);
              else dw *= hi ? c.frac[q] : T(1) - c.frac[q];
            }
            dp[a] += dw * s;
          }
        }
      }
      // Clamped coordinates do not move the output.
      for (int a = 0; a < 3; ++a)
        if (points[p][a] < T(0) || points[p][a] > T(1)) dp[a] = T(0);
      d_points[p] = dp;
    }
  }

 private:
  HashGridConfig cfg_;
  std::vector<Parameter<T>*> tables_;
  struct Level {
    std::uint32_t res;
    T scale;
    bool dense;
    std::uint32_t mask;
  };
  std::vector<Level> levels_;
};

}  // namespace dyn4d
