#pragma once

#include <span>
#include <string>
#include <vector>

#include "dyn4d/core/math.hpp"
#include "dyn4d/fields/hash_grid.hpp"
#include "dyn4d/fields/mlp.hpp"

namespace dyn4d {

template <typename T>
using RowVecX = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using Mat3X = Eigen::Matrix<T, 3, Eigen::Dynamic>;

/// Widths of the small networks sitting on top of the grids.
struct FieldWidths {
  int hidden = 64;            // density/color heads
  int head_hidden_layers = 2;
  int fusion_hidden = 64;     // dynamic fusion MLP, one hidden layer
  int fused = 32;             // fused embedding width
  int proposal_hidden = 16;   // proposal density heads, one hidden layer
};

namespace detail {

template <typename T>
MatX<T> encode_matrix(const HashGrid<T>& grid, std::span<const Vec3<T>> pts) {
  MatX<T> out(grid.output_dim(), static_cast<Eigen::Index>(pts.size()));
  grid.encode(pts, out.data());
  return out;
}

template <typename T>
RowVecX<T> softplus_rows(const MatX<T>& raw) {
  RowVecX<T> s(raw.cols());
  for (Eigen::Index i = 0; i < raw.cols(); ++i) s[i] = softplus(raw(0, i));
  return s;
}

template <typename T>
MatX<T> softplus_backward(const MatX<T>& raw, const RowVecX<T>& d_sigma) {
  MatX<T> d(1, raw.cols());
  for (Eigen::Index i = 0; i < raw.cols(); ++i) d(0, i) = d_sigma[i] * sigmoid(raw(0, i));
  return d;
}

template <typename T>
Mat3X<T> sigmoid_rows(const MatX<T>& raw) {
  Mat3X<T> c(3, raw.cols());
  for (Eigen::Index i = 0; i < raw.cols(); ++i)
    for (int k = 0; k < 3; ++k) c(k, i) = sigmoid(raw(k, i));
  return c;
}

/// The three time-bearing subspaces (x,y,t), (x,z,t), (y,z,t).
template <typename T>
std::array<std::vector<Vec3<T>>, 3> spacetime_queries(std::span<const Vec3<T>> pts, T time) {
  std::array<std::vector<Vec3<T>>, 3> q;
  for (auto& v : q) v.resize(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    q[0][i] = Vec3<T>(pts[i].x(), pts[i].y(), time);
    q[1][i] = Vec3<T>(pts[i].x(), pts[i].z(), time);
    q[2][i] = Vec3<T>(pts[i].y(), pts[i].z(), time);
  }
  return q;
}

}  // namespace detail

/// Densities (softplus) and colors (sigmoid) for a batch of points.
template <typename T>
struct DensityColor {
  RowVecX<T> sigma;
  Mat3X<T> color;
};

/// Static radiance field over normalized xyz.
template <typename T>
class StaticField {
 public:
  struct Cache {
    std::vector<Vec3<T>> points;
    typename Mlp<T>::Cache density_cache, color_cache;
    MatX<T> raw_density;
    Mat3X<T> color;
  };

  StaticField(const HashGridConfig& grid_cfg, const FieldWidths& w, ParameterStore<T>& store)
      : grid_(grid_cfg, store, "static.grid"),
        density_head_(grid_.output_dim(), w.hidden, w.head_hidden_layers, 1, store, "static.density_head"),
        color_head_(grid_.output_dim(), w.hidden, w.head_hidden_layers, 3, store, "static.color_head") {}

  void init(Rng& rng, double table_scale, double density_init) {
    grid_.init(rng, table_scale);
    density_head_.init(rng, static_cast<T>(inverse_softplus(density_init)));
    color_head_.init(rng);
  }

  HashGrid<T>& grid() { return grid_; }
  Mlp<T>& density_head() { return density_head_; }
  Mlp<T>& color_head() { return color_head_; }

  /// `points` are in the unit cube.
  DensityColor<T> forward(std::span<const Vec3<T>> points, Cache* cache = nullptr) const {
    const MatX<T> feat = detail::encode_matrix(grid_, points);
    typename Mlp<T>::Cache dc, cc;
    MatX<T> raw_density = density_head_.forward(feat, cache ? &dc : nullptr);
    MatX<T> raw_color = color_head_.forward(feat, cache ? &cc : nullptr);
    DensityColor<T> out{detail::softplus_rows(raw_density), detail::sigmoid_rows(raw_color)};
    if (cache) {
      cache->points.assign(points.begin(), points.end());
      cache->density_cache = std::move(dc);
      cache->color_cache = std::move(cc);
      cache->raw_density = std::move(raw_density);
      cache->color = out.color;
    }
    return out;
  }

  void backward(const Cache& cache, const RowVecX<T>& d_sigma, const Mat3X<T>& d_color) {
    const MatX<T> d_raw_density = detail::softplus_backward(cache.raw_density, d_sigma);
    const MatX<T> d_raw_color = d_color.cwiseProduct(cache.color.cwiseProduct((T(1) - cache.color.array()).matrix()));
    MatX<T> d_feat = density_head_.backward(cache.density_cache, d_raw_density, true);
    d_feat += color_head_.backward(cache.color_cache, d_raw_color, true);
    grid_.backward(cache.points, d_feat.data());
  }

 private:
  HashGrid<T> grid_;
  Mlp<T> density_head_;
  Mlp<T> color_head_;
};

/// Dynamic radiance field: three grids over (x,y,t), (x,z,t), (y,z,t), concatenated, fused by a
/// one-hidden-layer MLP, then density and color heads.
template <typename T>
class DynamicField {
 public:
  struct Cache {
    std::array<std::vector<Vec3<T>>, 3> queries;
    typename Mlp<T>::Cache fusion_cache, density_cache, color_cache;
    MatX<T> raw_density;
    Mat3X<T> color;
  };

  DynamicField(const HashGridConfig& grid_cfg, const FieldWidths& w, ParameterStore<T>& store)
      : grids_{HashGrid<T>(grid_cfg, store, "dynamic.grid_xyt"), HashGrid<T>(grid_cfg, store, "dynamic.grid_xzt"),
               HashGrid<T>(grid_cfg, store, "dynamic.grid_yzt")},
        fusion_(3 * grid_cfg.output_dim(), w.fusion_hidden, 1, w.fused, store, "dynamic.fusion"),
        density_head_(w.fused, w.hidden, w.head_hidden_layers, 1, store, "dynamic.density_head"),
        color_head_(w.fused, w.hidden, w.head_hidden_layers, 3, store, "dynamic.color_head") {}

  void init(Rng& rng, double table_scale, double density_init) {
    for (auto& g : grids_) g.init(rng, table_scale);
    fusion_.init(rng);
    density_head_.init(rng, static_cast<T>(inverse_softplus(density_init)));
    color_head_.init(rng);
  }

  HashGrid<T>& grid(int k) { return grids_[k]; }
  Mlp<T>& fusion() { return fusion_; }
  Mlp<T>& density_head() { return density_head_; }
  Mlp<T>& color_head() { return color_head_; }

  DensityColor<T> forward(std::span<const Vec3<T>> points, T time, Cache* cache = nullptr) const {
    auto queries = detail::spacetime_queries(points, time);
    const int dim = grids_[0].output_dim();
    MatX<T> feat(3 * dim, static_cast<Eigen::Index>(points.size()));
    for (int k = 0; k < 3; ++k) feat.middleRows(k * dim, dim) = detail::encode_matrix<T>(grids_[k], queries[k]);
    typename Mlp<T>::Cache fc, dc, cc;
    const MatX<T> fused = fusion_.forward(feat, cache ? &fc : nullptr);
    MatX<T> raw_density = density_head_.forward(fused, cache ? &dc : nullptr);
    MatX<T> raw_color = color_head_.forward(fused, cache ? &cc : nullptr);
    DensityColor<T> out{detail::softplus_rows(raw_density), detail::sigmoid_rows(raw_color)};
    if (cache) {
      cache->queries = std::move(queries);
      cache->fusion_cache = std::move(fc);
      cache->density_cache = std::move(dc);
      cache->color_cache = std::move(cc);
      cache->raw_density = std::move(raw_density);
      cache->color = out.color;
    }
    return out;
  }

  void backward(const Cache& cache, const RowVecX<T>& d_sigma, const Mat3X<T>& d_color) {
    const MatX<T> d_raw_density = detail::softplus_backward(cache.raw_density, d_sigma);
    const MatX<T> d_raw_color = d_color.cwiseProduct(cache.color.cwiseProduct((T(1) - cache.color.array()).matrix()));
    MatX<T> d_fused = density_head_.backward(cache.density_cache, d_raw_density, true);
    d_fused += color_head_.backward(cache.color_cache, d_raw_color, true);
    const MatX<T> d_feat = fusion_.backward(cache.fusion_cache, d_fused, true);
    const int dim = grids_[0].output_dim();
    for (int k = 0; k < 3; ++k) {
      const MatX<T> block = d_feat.middleRows(k * dim, dim);
      grids_[k].backward(cache.queries[k], block.data());
    }
  }

 private:
  std::array<HashGrid<T>, 3> grids_;
  Mlp<T> fusion_;
  Mlp<T> density_head_;
  Mlp<T> color_head_;
};

/// Density-only proposal networks, one static (xyz grid) and one dynamic (three space-time
/// grids); the proposal density is their sum.
template <typename T>
class ProposalField {
 public:
  struct Cache {
    std::vector<Vec3<T>> points;
    std::array<std::vector<Vec3<T>>, 3> queries;
    typename Mlp<T>::Cache static_cache, dynamic_cache;
    MatX<T> raw_static, raw_dynamic;
  };

  ProposalField(const HashGridConfig& grid_cfg, const FieldWidths& w, ParameterStore<T>& store)
      : static_grid_(grid_cfg, store, "proposal.static.grid"),
        static_head_(grid_cfg.output_dim(), w.proposal_hidden, 1, 1, store, "proposal.static.density_head"),
        dynamic_grids_{HashGrid<T>(grid_cfg, store, "proposal.dynamic.grid_xyt"),
                       HashGrid<T>(grid_cfg, store, "proposal.dynamic.grid_xzt"),
                       HashGrid<T>(grid_cfg, store, "proposal.dynamic.grid_yzt")},
        dynamic_head_(3 * grid_cfg.output_dim(), w.proposal_hidden, 1, 1, store, "proposal.dynamic.density_head") {}

  void init(Rng& rng, double table_scale, double density_init) {
    static_grid_.init(rng, table_scale);
    static_head_.init(rng, static_cast<T>(inverse_softplus(density_init)));
    for (auto& g : dynamic_grids_) g.init(rng, table_scale);
    dynamic_head_.init(rng, static_cast<T>(inverse_softplus(density_init)));
  }

  HashGrid<T>& static_grid() { return static_grid_; }
  HashGrid<T>& dynamic_grid(int k) { return dynamic_grids_[k]; }
  Mlp<T>& static_head() { return static_head_; }
  Mlp<T>& dynamic_head() { return dynamic_head_; }

  RowVecX<T> forward(std::span<const Vec3<T>> points, T time, Cache* cache = nullptr) const {
    const MatX<T> feat_s = detail::encode_matrix(static_grid_, points);
    auto queries = detail::spacetime_queries(points, time);
    const int dim = static_grid_.output_dim();
    MatX<T> feat_d(3 * dim, static_cast<Eigen::Index>(points.size()));
    for (int k = 0; k < 3; ++k) feat_d.middleRows(k * dim, dim) = detail::encode_matrix<T>(dynamic_grids_[k], queries[k]);
    typename Mlp<T>::Cache sc, dc;
    MatX<T> raw_s = static_head_.forward(feat_s, cache ? &sc : nullptr);
    MatX<T> raw_d = dynamic_head_.forward(feat_d, cache ? &dc : nullptr);
    RowVecX<T> sigma = detail::softplus_rows(raw_s) + detail::softplus_rows(raw_d);
    if (cache) {
      cache->points.assign(points.begin(), points.end());
      cache->queries = std::move(queries);
      cache->static_cache = std::move(sc);
      cache->dynamic_cache = std::move(dc);
      cache->raw_static = std::move(raw_s);
      cache->raw_dynamic = std::move(raw_d);
    }
    return sigma;
  }

  void backward(const Cache& cache, const RowVecX<T>& d_sigma) {
    const MatX<T> d_feat_s =
        static_head_.backward(cache.static_cache, detail::softplus_backward(cache.raw_static, d_sigma), true);
    static_grid_.backward(cache.points, d_feat_s.data());
    const MatX<T> d_feat_d =
        dynamic_head_.backward(cache.dynamic_cache, detail::softplus_backward(cache.raw_dynamic, d_sigma), true);
    const int dim = static_grid_.output_dim();
    for (int k = 0; k < 3; ++k) {
      const MatX<T> block = d_feat_d.middleRows(k * dim, dim);
      dynamic_grids_[k].backward(cache.queries[k], block.data());
    }
  }

 private:
  HashGrid<T> static_grid_;
  Mlp<T> static_head_;
  std::array<HashGrid<T>, 3> dynamic_grids_;
  Mlp<T> dynamic_head_;
};

}  // namespace dyn4d
