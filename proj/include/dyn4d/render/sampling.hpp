#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dyn4d/core/error.hpp"
#include "dyn4d/core/random.hpp"
#include "dyn4d/data/rays.hpp"

namespace dyn4d {

struct SamplerConfig {
  int n_proposal = 128;
  int n_fine = 64;
  bool jitter = true;               // stratified jitter; off gives bin midpoints
  double histogram_padding = 0.01;  // fraction of proposal mass spread uniformly before resampling
};

/// Stratified samples: `n` equal bins over [t_near, t_far], one sample per bin.
/// `edges` receives the n + 1 bin boundaries.
template <typename T>
void stratified_samples(double t_near, double t_far, int n, Rng* rng, std::span<T> samples, std::span<T> edges) {
  const double width = (t_far - t_near) / n;
  for (int k = 0; k <= n; ++k) edges[k] = static_cast<T>(k == n ? t_far : t_near + k * width);
  for (int k = 0; k < n; ++k) {
    const double u = rng ? uniform01(*rng) : 0.5;
    samples[k] = static_cast<T>(t_near + (k + u) * width);
  }
}

/// Piecewise-constant histogram of the proposal: bin k carries density sigma[k] over
/// [edges[k], edges[k+1]] and receives weight T_k (1 - exp(-sigma_k * width_k)).
template <typename T>
void proposal_histogram(std::span<const T> edges, std::span<const T> sigma, std::span<T> weights) {
  T optical = T(0);
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    const T tau = sigma[k] * (edges[k + 1] - edges[k]);
    weights[k] = std::exp(-optical) * -std::expm1(-tau);
    optical += tau;
  }
}

/// Reverse pass of `proposal_histogram` (accumulates into d_sigma).
template <typename T>
void proposal_histogram_backward(std::span<const T> edges, std::span<const T> sigma, std::span<const T> weights,
                                 std::span<const T> d_weights, std::span<T> d_sigma) {
  const std::size_t n = sigma.size();
  std::vector<T> trans(n);
  T optical = T(0);
  for (std::size_t k = 0; k < n; ++k) {
    trans[k] = std::exp(-optical);
    optical += sigma[k] * (edges[k + 1] - edges[k]);
  }
  T suffix = T(0);
  for (std::size_t k = n; k-- > 0;) {
    const T width = edges[k + 1] - edges[k];
    const T d_tau = d_weights[k] * trans[k] * std::exp(-sigma[k] * width) - suffix;
    suffix += d_weights[k] * weights[k];
    d_sigma[k] += d_tau * width;
  }
}

/// Draws `fine.size()` positions by inverse-CDF sampling of the histogram (stratified in u),
/// then enforces a strictly increasing sequence with gap >= min_gap inside [edges.front(), edges.back()).
template <typename T>
void inverse_cdf_samples(std::span<const T> edges, std::span<const T> weights, double padding, Rng* rng,
                         std::span<T> fine, double min_gap) {
  const std::size_t bins = weights.size();
  const int n = static_cast<int>(fine.size());
  double total = 0.0;
  for (T w : weights) total += static_cast<double>(w);
  const double pad = padding * total / static_cast<double>(bins) + 1e-12;
  std::vector<double> cdf(bins + 1, 0.0);
  for (std::size_t k = 0; k < bins; ++k) cdf[k + 1] = cdf[k] + static_cast<double>(weights[k]) + pad;
  const double mass = cdf[bins];

  std::size_t bin = 0;
  for (int j = 0; j < n; ++j) {
    const double u = (j + (rng ? uniform01(*rng) : 0.5)) / n * mass;
    while (bin + 1 < bins && cdf[bin + 1] <= u) ++bin;
    const double p = cdf[bin + 1] - cdf[bin];
    const double frac = std::clamp((u - cdf[bin]) / p, 0.0, 1.0);
    const double lo = static_cast<double>(edges[bin]);
    const double hi = static_cast<double>(edges[bin + 1]);
    fine[j] = static_cast<T>(lo + frac * (hi - lo));
  }

  const T t_far = edges[bins];
  const T gap = static_cast<T>(min_gap);
  for (int j = 1; j < n; ++j) fine[j] = std::max(fine[j], fine[j - 1] + gap);
  T upper = t_far;
  for (int j = n; j-- > 0;) {
    fine[j] = std::min(fine[j], upper - gap);
    upper = fine[j];
  }
}

/// Interval lengths t_{i+1} - t_i, with the last interval closed by t_far.
template <typename T>
void sample_deltas(std::span<const T> t, T t_far, std::span<T> delta) {
  for (std::size_t i = 0; i < t.size(); ++i) delta[i] = (i + 1 < t.size() ? t[i + 1] : t_far) - t[i];
}

struct ProposedSamples {
  std::vector<double> edges;          // proposal bins
  std::vector<double> proposal_t;     // proposal sample positions
  std::vector<double> proposal_sigma;
  std::vector<double> histogram;      // proposal weights per bin
  std::vector<double> t;              // fine sample positions, strictly increasing
  std::vector<double> delta;
};

/// Proposal-guided sampling for one ray with an arbitrary proposal density
/// `density(t) -> sigma`: stratified proposal samples, transmittance histogram, then
/// inverse-CDF fine samples.
template <typename DensityFn>
ProposedSamples propose_samples(DensityFn&& density, const Ray& ray, const SamplerConfig& cfg, Rng& rng) {
  if (!ray.hit || !(ray.t_far > ray.t_near)) throw RenderError("empty ray");
  ProposedSamples out;
  out.edges.resize(cfg.n_proposal + 1);
  out.proposal_t.resize(cfg.n_proposal);
  stratified_samples<double>(ray.t_near, ray.t_far, cfg.n_proposal, cfg.jitter ? &rng : nullptr, out.proposal_t,
                             out.edges);
  out.proposal_sigma.resize(cfg.n_proposal);
  for (int k = 0; k < cfg.n_proposal; ++k) out.proposal_sigma[k] = density(out.proposal_t[k]);
  out.histogram.resize(cfg.n_proposal);
  proposal_histogram<double>(out.edges, out.proposal_sigma, out.histogram);
  out.t.resize(cfg.n_fine);
  inverse_cdf_samples<double>(out.edges, out.histogram, cfg.histogram_padding, cfg.jitter ? &rng : nullptr, out.t,
                              1e-6 * (ray.t_far - ray.t_near));
  out.delta.resize(cfg.n_fine);
  sample_deltas<double>(out.t, ray.t_far, out.delta);
  return out;
}

}  // namespace dyn4d
