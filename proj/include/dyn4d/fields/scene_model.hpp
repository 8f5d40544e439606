#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dyn4d/data/camera.hpp"
#include "dyn4d/fields/fields.hpp"
#include "json.hpp"

namespace dyn4d {

struct ModelConfig {
  HashGridConfig radiance_grid = HashGridConfig::radiance();
  HashGridConfig proposal_grid = HashGridConfig::proposal();
  FieldWidths widths;
  double static_density_init = 0.05;  // initial sigma per unit length
  double dynamic_density_init = 0.05;
  double proposal_density_init = 0.05;
  double table_init_scale = 1e-4;
  std::uint64_t init_seed = 0;
  Aabb aabb;
};

inline void to_json(nlohmann::json& j, const FieldWidths& w) {
  j = {{"hidden", w.hidden},
       {"head_hidden_layers", w.head_hidden_layers},
       {"fusion_hidden", w.fusion_hidden},
       {"fused", w.fused},
       {"proposal_hidden", w.proposal_hidden}};
}
inline void from_json(const nlohmann::json& j, FieldWidths& w) {
  w.hidden = j.value("hidden", w.hidden);
  w.head_hidden_layers = j.value("head_hidden_layers", w.head_hidden_layers);
  w.fusion_hidden = j.value("fusion_hidden", w.fusion_hidden);
  w.fused = j.value("fused", w.fused);
  w.proposal_hidden = j.value("proposal_hidden", w.proposal_hidden);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"radiance_grid", c.radiance_grid},
       {"proposal_grid", c.proposal_grid},
       {"widths", c.widths},
       {"static_density_init", c.static_density_init},
       {"dynamic_density_init", c.dynamic_density_init},
       {"proposal_density_init", c.proposal_density_init},
       {"table_init_scale", c.table_init_scale},
       {"init_seed", c.init_seed},
       {"aabb",
        {{"min", {c.aabb.min.x(), c.aabb.min.y(), c.aabb.min.z()}},
         {"max", {c.aabb.max.x(), c.aabb.max.y(), c.aabb.max.z()}}}}};
}
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (j.contains("radiance_grid")) c.radiance_grid = j.at("radiance_grid").get<HashGridConfig>();
  if (j.contains("proposal_grid")) c.proposal_grid = j.at("proposal_grid").get<HashGridConfig>();
  if (j.contains("widths")) c.widths = j.at("widths").get<FieldWidths>();
  c.static_density_init = j.value("static_density_init", c.static_density_init);
  c.dynamic_density_init = j.value("dynamic_density_init", c.dynamic_density_init);
  c.proposal_density_init = j.value("proposal_density_init", c.proposal_density_init);
  c.table_init_scale = j.value("table_init_scale", c.table_init_scale);
  c.init_seed = j.value("init_seed", c.init_seed);
  if (j.contains("aabb")) {
    const auto lo = j.at("aabb").at("min").get<std::vector<double>>();
    const auto hi = j.at("aabb").at("max").get<std::vector<double>>();
    c.aabb = Aabb{Vec3d(lo.at(0), lo.at(1), lo.at(2)), Vec3d(hi.at(0), hi.at(1), hi.at(2))};
  }
}

/// All trainable scene state: static and dynamic radiance fields plus the proposal networks.
/// Fields see points normalized from the scene box to the unit cube.
template <typename T>
class SceneModel {
 public:
  explicit SceneModel(const ModelConfig& cfg)
      : cfg_(cfg),
        static_(cfg.radiance_grid, cfg.widths, store_),
        dynamic_(cfg.radiance_grid, cfg.widths, store_),
        proposal_(cfg.proposal_grid, cfg.widths, store_) {
    cfg_.aabb.validate();
    Rng rng(cfg.init_seed);
    static_.init(rng, cfg.table_init_scale, cfg.static_density_init);
    dynamic_.init(rng, cfg.table_init_scale, cfg.dynamic_density_init);
    proposal_.init(rng, cfg.table_init_scale, cfg.proposal_density_init);
  }

  SceneModel(SceneModel&&) noexcept = default;
  SceneModel& operator=(SceneModel&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  const Aabb& aabb() const { return cfg_.aabb; }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }
  StaticField<T>& static_field() { return static_; }
  const StaticField<T>& static_field() const { return static_; }
  DynamicField<T>& dynamic_field() { return dynamic_; }
  const DynamicField<T>& dynamic_field() const { return dynamic_; }
  ProposalField<T>& proposal() { return proposal_; }
  const ProposalField<T>& proposal() const { return proposal_; }

  /// World point -> unit cube (clamped).
  Vec3<T> normalize(const Vec3d& world) const {
    const Vec3d u = (world - cfg_.aabb.min).cwiseQuotient(cfg_.aabb.extent());
    return u.cwiseMax(0.0).cwiseMin(1.0).template cast<T>();
  }

 private:
  ModelConfig cfg_;
  ParameterStore<T> store_;  // declared before the fields, which register into it
  StaticField<T> static_;
  DynamicField<T> dynamic_;
  ProposalField<T> proposal_;
};

/// Same architecture in another scalar type, parameters converted value by value.
template <typename To, typename From>
SceneModel<To> convert_model(const SceneModel<From>& src) {
  SceneModel<To> dst(src.config());
  for (std::size_t i = 0; i < src.parameters().count(); ++i) {
    const auto& from = src.parameters()[i].value;
    auto& to = dst.parameters()[i].value;
    for (std::size_t k = 0; k < from.size(); ++k) to[k] = static_cast<To>(from[k]);
  }
  return dst;
}

}  // namespace dyn4d
