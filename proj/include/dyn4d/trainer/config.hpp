#pragma once

#include <cstdint>
#include <set>
#include <string>

#include "json.hpp"

#include "dyn4d/core/error.hpp"
#include "dyn4d/fields/scene_model.hpp"
#include "dyn4d/guidance/diffusion.hpp"
#include "dyn4d/losses/schedule.hpp"
#include "dyn4d/trainer/adam.hpp"

namespace dyn4d {

struct TrainConfig {
  long iterations = 30000;
  double learning_rate = 0.01;
  AdamConfig adam;
  int render_width = 240;
  int render_height = 140;
  int guidance_resolution = 512;
  std::uint64_t seed = 0;
  LossSchedule loss;
  double perturbation_radius = 0.1;  // fraction of the box diagonal

  std::string provider = "analytic";  // analytic | remote
  std::string endpoint;
  std::string auth_token;
  std::string condition;
  double cfg_weight = 7.5;
  DiffusionSchedule diffusion;
  double anneal_start = 0.6;
  double anneal_end = 0.2;

  int ray_batch = 4096;
  int n_proposal = 128;
  int n_fine = 64;
  double depth_opacity_threshold = 0.01;  // rays below this opacity are left out of the depth loss

  long log_every = 100;
  long checkpoint_every = 1000;
  bool deterministic = false;

  ModelConfig model;  // aabb and init_seed are taken from the dataset and seed

  void validate() const {
    if (iterations <= 0) throw ValidationError("config: iterations must be positive");
    if (render_width <= 0 || render_height <= 0 || guidance_resolution <= 0) {
      throw ValidationError("config: resolutions must be positive");
    }
    if (!(learning_rate > 0.0)) throw ValidationError("config: learning_rate must be positive");
    if (ray_batch <= 0 || n_proposal <= 0 || n_fine <= 0) throw ValidationError("config: sample counts must be positive");
    if (log_every <= 0 || checkpoint_every <= 0) throw ValidationError("config: log/checkpoint intervals must be positive");
    if (perturbation_radius < 0.0) throw ValidationError("config: perturbation_radius must be non-negative");
    if (provider != "analytic" && provider != "remote") throw ValidationError("config: unknown provider " + provider);
    if (provider == "remote" && endpoint.empty()) throw ValidationError("config: remote provider needs an endpoint");
    loss.validate();
    diffusion.validate();
    model.radiance_grid.validate();
    model.proposal_grid.validate();
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"iterations", c.iterations},
       {"learning_rate", c.learning_rate},
       {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
       {"render_resolution", {c.render_width, c.render_height}},
       {"guidance_resolution", c.guidance_resolution},
       {"seed", c.seed},
       {"loss", c.loss},
       {"perturbation_radius", c.perturbation_radius},
       {"provider", c.provider},
       {"endpoint", c.endpoint},
       {"condition", c.condition},
       {"cfg_weight", c.cfg_weight},
       {"diffusion", c.diffusion},
       {"anneal_start", c.anneal_start},
       {"anneal_end", c.anneal_end},
       {"ray_batch", c.ray_batch},
       {"n_proposal", c.n_proposal},
       {"n_fine", c.n_fine},
       {"depth_opacity_threshold", c.depth_opacity_threshold},
       {"log_every", c.log_every},
       {"checkpoint_every", c.checkpoint_every},
       {"deterministic", c.deterministic},
       {"model", c.model}};
}

/// Every key is optional; unknown keys are rejected so typos do not silently fall back to defaults.
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::set<std::string> known = {
      "iterations", "learning_rate", "adam",       "render_resolution", "guidance_resolution",
      "seed",       "loss",          "perturbation_radius", "provider", "endpoint",
      "auth_token", "condition",     "cfg_weight", "diffusion",         "anneal_start",
      "anneal_end", "ray_batch",     "n_proposal", "n_fine",            "depth_opacity_threshold",
      "log_every",  "checkpoint_every", "deterministic", "model"};
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ValidationError("config: unknown key " + key);
  try {
    c.iterations = j.value("iterations", c.iterations);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      c.adam.beta1 = a.value("beta1", c.adam.beta1);
      c.adam.beta2 = a.value("beta2", c.adam.beta2);
      c.adam.eps = a.value("eps", c.adam.eps);
    }
    if (j.contains("render_resolution")) {
      const auto& r = j.at("render_resolution");
      c.render_width = r.at(0).get<int>();
      c.render_height = r.at(1).get<int>();
    }
    c.guidance_resolution = j.value("guidance_resolution", c.guidance_resolution);
    c.seed = j.value("seed", c.seed);
    if (j.contains("loss")) {
      nlohmann::json merged = c.loss;
      for (const auto& [key, _] : j.at("loss").items())
        if (!merged.contains(key)) throw ValidationError("config: unknown key loss." + key);
      merged.update(j.at("loss"));
      c.loss = merged.get<LossSchedule>();
    }
    c.perturbation_radius = j.value("perturbation_radius", c.perturbation_radius);
    c.provider = j.value("provider", c.provider);
    c.endpoint = j.value("endpoint", c.endpoint);
    c.auth_token = j.value("auth_token", c.auth_token);
    c.condition = j.value("condition", c.condition);
    c.cfg_weight = j.value("cfg_weight", c.cfg_weight);
    if (j.contains("diffusion")) c.diffusion = j.at("diffusion").get<DiffusionSchedule>();
    c.anneal_start = j.value("anneal_start", c.anneal_start);
    c.anneal_end = j.value("anneal_end", c.anneal_end);
    c.ray_batch = j.value("ray_batch", c.ray_batch);
    c.n_proposal = j.value("n_proposal", c.n_proposal);
    c.n_fine = j.value("n_fine", c.n_fine);
    c.depth_opacity_threshold = j.value("depth_opacity_threshold", c.depth_opacity_threshold);
    c.log_every = j.value("log_every", c.log_every);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.deterministic = j.value("deterministic", c.deterministic);
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

}  // namespace dyn4d
