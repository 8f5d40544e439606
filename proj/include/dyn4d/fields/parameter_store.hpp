#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dyn4d/core/error.hpp"

namespace dyn4d {

/// Storage for parameter values and gradients. Aligned so Eigen kernels over these buffers
/// always take the same code path, which keeps results independent of heap addresses.
template <typename T>
using ParamBuffer = std::vector<T, Eigen::aligned_allocator<T>>;

/// One trainable array and its gradient buffer.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  ParamBuffer<T> value;
  ParamBuffer<T> grad;

  std::size_t size() const { return value.size(); }
};

/// Flat registry of every trainable array, in registration order. Modules keep raw pointers
/// into the store; the pointees never move, so the store (and its owner) may be moved.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Parameter<T>& add(std::string name, std::vector<std::size_t> shape) {
    if (find(name)) throw ValidationError("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->shape = std::move(shape);
    const std::size_t n = std::accumulate(p->shape.begin(), p->shape.end(), std::size_t{1}, std::multiplies<>());
    p->value.assign(n, T(0));
    p->grad.assign(n, T(0));
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }
  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  std::size_t count() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), T(0));
  }

  template <typename Fn>
  void for_each(Fn&& fn) {
    for (auto& p : params_) fn(*p);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& p : params_) fn(static_cast<const Parameter<T>&>(*p));
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

}  // namespace dyn4d
