#pragma once

#include <cmath>
#include <vector>

#include "dyn4d/core/error.hpp"
#include "dyn4d/fields/parameter_store.hpp"

namespace dyn4d {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments per parameter, in store order.
template <typename T>
struct AdamState {
  long step = 0;
  std::vector<std::vector<T>> m, v;
};

/// One bias-corrected Adam update using the gradients held in the store.
template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state, double lr, const AdamConfig& cfg = {}) {
  if (state.m.empty()) {
    state.m.resize(params.count());
    state.v.resize(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
      state.m[i].assign(params[i].size(), T(0));
      state.v[i].assign(params[i].size(), T(0));
    }
  }
  if (state.m.size() != params.count()) throw ValidationError("adam: state does not match parameters");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
  const T step_size = T(lr / bc1);
  const T inv_sqrt_bc2 = T(1.0 / std::sqrt(bc2));
  const T eps = T(cfg.eps);
  for (std::size_t i = 0; i < params.count(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.size()) throw ValidationError("adam: state shape mismatch for " + p.name);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const T g = p.grad[k];
      m[k] = b1 * m[k] + (T(1) - b1) * g;
      v[k] = b2 * v[k] + (T(1) - b2) * g * g;
      p.value[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
    }
  }
}

}  // namespace dyn4d
