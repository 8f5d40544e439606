// Independent scalar reference implementations used as test oracles. They share no code with the
// library beyond plain data types.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// ---- hash grid -------------------------------------------------------------------------------

struct GridSpec {
  int levels, features, log2_size, base;
  double scale;
};

inline std::uint64_t level_res(const GridSpec& g, int l) {
  return static_cast<std::uint64_t>(std::floor(g.base * std::pow(g.scale, l)));
}

inline std::uint64_t level_rows(const GridSpec& g, int l) {
  const std::uint64_t r = level_res(g, l);
  return std::min<std::uint64_t>(r * r * r, std::uint64_t{1} << g.log2_size);
}

inline std::uint64_t slot(const GridSpec& g, int l, std::uint64_t x, std::uint64_t y, std::uint64_t z) {
  const std::uint64_t r = level_res(g, l), rows = level_rows(g, l);
  if (r * r * r <= rows) return x + y * r + z * r * r;
  const std::uint64_t h = (x * 1ull) ^ ((y * 2654435761ull) & 0xFFFFFFFFull) ^ ((z * 805459861ull) & 0xFFFFFFFFull);
  return (h & 0xFFFFFFFFull) % rows;
}

/// tables[l] is row-major rows x features.
inline std::vector<double> hash_encode(const GridSpec& g, const std::vector<std::vector<double>>& tables,
                                       const std::array<double, 3>& p) {
  std::vector<double> out;
  for (int l = 0; l < g.levels; ++l) {
    const double s = static_cast<double>(level_res(g, l) - 1);
    std::array<std::uint64_t, 3> lo{};
    std::array<double, 3> t{};
    for (int a = 0; a < 3; ++a) {
      const double x = std::min(std::max(p[a], 0.0), 1.0) * s;
      double c = std::floor(x);
      if (c > s - 1) c = s - 1;
      lo[a] = static_cast<std::uint64_t>(c);
      t[a] = x - c;
    }
    for (int f = 0; f < g.features; ++f) {
      double acc = 0.0;
      for (int dx = 0; dx < 2; ++dx)
        for (int dy = 0; dy < 2; ++dy)
          for (int dz = 0; dz < 2; ++dz) {
            const double w = (dx ? t[0] : 1 - t[0]) * (dy ? t[1] : 1 - t[1]) * (dz ? t[2] : 1 - t[2]);
            acc += w * tables[l][slot(g, l, lo[0] + dx, lo[1] + dy, lo[2] + dz) * g.features + f];
          }
      out.push_back(acc);
    }
  }
  return out;
}

// ---- small networks --------------------------------------------------------------------------

/// Weights are row-major [out, in]; ReLU between layers, linear output.
inline std::vector<double> mlp(const std::vector<std::vector<double>>& weights,
                               const std::vector<std::vector<double>>& biases, std::vector<double> x) {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const std::size_t out = biases[k].size(), in = x.size();
    std::vector<double> y(out);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = biases[k][o];
      for (std::size_t i = 0; i < in; ++i) acc += weights[k][o * in + i] * x[i];
      y[o] = (k + 1 < weights.size()) ? std::max(acc, 0.0) : acc;
    }
    x = std::move(y);
  }
  return x;
}

inline double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---- pinhole camera --------------------------------------------------------------------------

/// Unit world direction through pixel position (row, col) for a camera looking down its -z axis
/// with +y up; R is world-from-camera.
inline Eigen::Vector3d pinhole_direction(const Eigen::Matrix3d& R, double fx, double fy, double cx, double cy,
                                         double row, double col) {
  const double xc = (col - cx) / fx;
  const double yc = (cy - row) / fy;
  Eigen::Vector3d d(R(0, 0) * xc + R(0, 1) * yc - R(0, 2), R(1, 0) * xc + R(1, 1) * yc - R(1, 2),
                    R(2, 0) * xc + R(2, 1) * yc - R(2, 2));
  return d / std::sqrt(d.x() * d.x() + d.y() * d.y() + d.z() * d.z());
}

// ---- volume rendering ------------------------------------------------------------------------

/// Textbook single-field quadrature: sum_i T_i (1 - exp(-sigma_i delta_i)) c_i.
inline Eigen::Vector3d nerf_color(const std::vector<double>& sigma, const std::vector<double>& delta,
                                  const std::vector<Eigen::Vector3d>& color) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  double trans = 1.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    const double alpha = 1.0 - std::exp(-sigma[i] * delta[i]);
    c += trans * alpha * color[i];
    trans *= std::exp(-sigma[i] * delta[i]);
  }
  return c;
}

/// Static and dynamic contributions accumulated separately and added at the end.
inline Eigen::Vector3d two_pass_blend(const std::vector<double>& ss, const std::vector<double>& sd,
                                      const std::vector<double>& delta, const std::vector<Eigen::Vector3d>& cs,
                                      const std::vector<Eigen::Vector3d>& cd, double eps = 1e-6) {
  Eigen::Vector3d stat = Eigen::Vector3d::Zero(), dyn = Eigen::Vector3d::Zero();
  double optical = 0.0;
  for (std::size_t i = 0; i < ss.size(); ++i) {
    const double s = ss[i] + sd[i];
    const double w = std::exp(-optical) * (1.0 - std::exp(-s * delta[i]));
    stat += w * ss[i] / (s + eps) * cs[i];
    optical += s * delta[i];
  }
  optical = 0.0;
  for (std::size_t i = 0; i < ss.size(); ++i) {
    const double s = ss[i] + sd[i];
    const double w = std::exp(-optical) * (1.0 - std::exp(-s * delta[i]));
    dyn += w * sd[i] / (s + eps) * cd[i];
    optical += s * delta[i];
  }
  return stat + dyn;
}

// ---- proposal supervision --------------------------------------------------------------------

/// Bound for fine interval [a, b): total mass of proposal bins whose interior meets it.
inline double proposal_loss(const std::vector<double>& edges, const std::vector<double>& prop,
                            const std::vector<double>& fine_t, const std::vector<double>& fine_w) {
  double loss = 0.0;
  for (std::size_t i = 0; i < fine_t.size(); ++i) {
    const double a = fine_t[i], b = i + 1 < fine_t.size() ? fine_t[i + 1] : edges.back();
    double bound = 0.0;
    for (std::size_t k = 0; k < prop.size(); ++k)
      if (edges[k + 1] > a && edges[k] < b) bound += prop[k];
    const double excess = fine_w[i] - bound;
    if (excess > 0) loss += excess * excess;
  }
  return loss;
}

// ---- SSIM ------------------------------------------------------------------------------------

/// Direct windowed SSIM of one channel (planes are row-major h x w): Gaussian 11x11, sigma 1.5,
/// population statistics, windows fully inside the image, mean over window centers.
inline double ssim_channel(const std::vector<double>& x, const std::vector<double>& y, int w, int h) {
  double g[11][11];
  double norm = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) norm += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 2.25));
  for (auto& row : g)
    for (double& v : row) v /= norm;
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  int count = 0;
  for (int r = 5; r < h - 5; ++r)
    for (int c = 5; c < w - 5; ++c) {
      double mx = 0, my = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          mx += g[i][j] * x[(r + i - 5) * w + c + j - 5];
          my += g[i][j] * y[(r + i - 5) * w + c + j - 5];
        }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double a = x[(r + i - 5) * w + c + j - 5] - mx, b = y[(r + i - 5) * w + c + j - 5] - my;
          vx += g[i][j] * a * a;
          vy += g[i][j] * b * b;
          cxy += g[i][j] * a * b;
        }
      total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / count;
}

}  // namespace oracle
