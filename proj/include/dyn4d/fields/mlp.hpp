#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dyn4d/core/math.hpp"
#include "dyn4d/core/random.hpp"
#include "dyn4d/fields/parameter_store.hpp"

namespace dyn4d {

/// Fully connected network: `hidden_layers` ReLU layers of width `hidden`, linear output.
/// Activations are column-per-sample matrices.
template <typename T>
class Mlp {
 public:
  struct Cache {
    std::vector<MatX<T>> inputs;  // input of every layer; ReLU outputs for hidden layers
  };

  Mlp(int in, int hidden, int hidden_layers, int out, ParameterStore<T>& store, const std::string& prefix)
      : in_(in), out_(out) {
    int width = in;
    for (int k = 0; k <= hidden_layers; ++k) {
      const int next = k == hidden_layers ? out : hidden;
      const std::string layer = prefix + ".layer" + std::to_string(k);
      weights_.push_back(&store.add(layer + ".weight", {std::size_t(next), std::size_t(width)}));
      biases_.push_back(&store.add(layer + ".bias", {std::size_t(next)}));
      width = next;
    }
  }

  int input_dim() const { return in_; }
  int output_dim() const { return out_; }
  std::size_t layer_count() const { return weights_.size(); }
  Parameter<T>& weight(std::size_t k) { return *weights_[k]; }
  Parameter<T>& bias(std::size_t k) { return *biases_[k]; }

  /// Kaiming-uniform weights, zero biases, then the output bias set to `output_bias`.
  void init(Rng& rng, T output_bias = T(0)) {
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      const double bound = std::sqrt(6.0 / static_cast<double>(weights_[k]->shape[1]));
      for (auto& w : weights_[k]->value) w = static_cast<T>(uniform(rng, -bound, bound));
      std::fill(biases_[k]->value.begin(), biases_[k]->value.end(), T(0));
    }
    std::fill(biases_.back()->value.begin(), biases_.back()->value.end(), output_bias);
  }

  MatX<T> forward(const MatX<T>& x, Cache* cache = nullptr) const {
    if (cache) cache->inputs.clear();
    MatX<T> h = x;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      MatX<T> z = weight_map(k) * h;
      z.colwise() += bias_map(k);
      if (k + 1 < weights_.size()) z = z.cwiseMax(T(0));
      if (cache) cache->inputs.push_back(std::move(h));
      h = std::move(z);
    }
    return h;
  }

  /// Accumulates parameter gradients; returns d loss / d input when `need_input_grad`.
  MatX<T> backward(const Cache& cache, const MatX<T>& d_out, bool need_input_grad = false) {
    MatX<T> g = d_out;
    for (std::size_t k = weights_.size(); k-- > 0;) {
      const MatX<T>& input = cache.inputs[k];
      weight_grad_map(k).noalias() += g * input.transpose();
      bias_grad_map(k) += g.rowwise().sum();
      if (k == 0 && !need_input_grad) return {};
      MatX<T> gin = weight_map(k).transpose() * g;
      if (k > 0) gin = (input.array() > T(0)).select(gin, T(0));
      g = std::move(gin);
    }
    return g;
  }

 private:
  using WeightMap = Eigen::Map<RowMatX<T>>;
  using ConstWeightMap = Eigen::Map<const RowMatX<T>>;
  using BiasMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
  using ConstBiasMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

  ConstWeightMap weight_map(std::size_t k) const {
    return ConstWeightMap(weights_[k]->value.data(), weights_[k]->shape[0], weights_[k]->shape[1]);
  }
  WeightMap weight_grad_map(std::size_t k) {
    return WeightMap(weights_[k]->grad.data(), weights_[k]->shape[0], weights_[k]->shape[1]);
  }
  ConstBiasMap bias_map(std::size_t k) const { return ConstBiasMap(biases_[k]->value.data(), biases_[k]->shape[0]); }
  BiasMap bias_grad_map(std::size_t k) { return BiasMap(biases_[k]->grad.data(), biases_[k]->shape[0]); }

  int in_;
  int out_;
  std::vector<Parameter<T>*> weights_;
  std::vector<Parameter<T>*> biases_;
};

}  // namespace dyn4d
