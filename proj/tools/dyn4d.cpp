// Command-line front end: train, render, eval, synth.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dyn4d/core/io.hpp"
#include "dyn4d/data/dataset.hpp"
#include "dyn4d/data/synthetic.hpp"
#include "dyn4d/fields/checkpoint.hpp"
#include "dyn4d/trainer/evaluate.hpp"
#include "dyn4d/trainer/train.hpp"

namespace fs = std::filesystem;
using namespace dyn4d;

namespace {

TrainConfig read_config(const std::string& path) {
  TrainConfig cfg;
  if (path.empty()) return cfg;
  try {
    cfg = nlohmann::json::parse(read_file(path)).get<TrainConfig>();
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return cfg;
}

// Sample counts stored with the checkpoint, falling back to the defaults.
SamplerConfig sampler_from_meta(const nlohmann::json& meta) {
  SamplerConfig s = eval_sampler();
  if (meta.contains("config")) {
    s.n_proposal = meta["config"].value("n_proposal", s.n_proposal);
    s.n_fine = meta["config"].value("n_fine", s.n_fine);
  }
  return s;
}

int run_train(const std::string& data, const std::string& config, const std::string& out, long seed,
              const std::string& provider, const std::string& endpoint, const std::string& token, bool deterministic,
              long iterations) {
  TrainConfig cfg = read_config(config);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (!provider.empty()) cfg.provider = provider;
  if (!endpoint.empty()) cfg.endpoint = endpoint;
  if (!token.empty()) cfg.auth_token = token;
  if (deterministic) cfg.deterministic = true;
  if (iterations > 0) cfg.iterations = iterations;
  const SceneDataset ds = load_dataset(data);
  TrainHooks hooks;
  hooks.on_report = [](const LossReport& r) {
    std::printf("iter %6ld  total %.5f  rgb %.5f  depth %.5f  zvar %.5f  decomp %.4f  sds %.4f  prop %.5f\n", r.iter,
                r.total, r.rgb, r.depth, r.zvar, r.decomp, r.sds, r.prop);
    std::fflush(stdout);
  };
  train(ds, cfg, out, hooks);
  std::printf("wrote %s\n", (fs::path(out) / "checkpoint.bin").c_str());
  return 0;
}

int run_render(const std::string& ckpt, const std::string& mode, const std::string& poses, const std::string& out) {
  auto loaded = load_checkpoint(ckpt);
  const auto j = nlohmann::json::parse(read_file(poses));
  std::vector<CameraPose> cameras;
  for (const auto& c : j.at("cameras")) cameras.push_back(detail::camera_from_json(c));
  const auto times = j.at("timestamps").get<std::vector<double>>();
  if (cameras.empty() || times.empty()) throw ValidationError(poses + ": need at least one camera and timestamp");
  std::vector<TrajectoryStop> stops;
  if (mode == "bullet") {
    stops = bullet_time(cameras, times.front());
  } else {
    stops = stabilized_view(cameras.front(), times);
  }
  render_trajectory(loaded.model, stops, out, sampler_from_meta(loaded.meta));
  std::printf("wrote %zu frames to %s\n", stops.size(), out.c_str());
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data, const std::string& out) {
  auto loaded = load_checkpoint(ckpt);
  const SceneDataset ds = load_dataset(data);
  const EvalReport rep = evaluate(loaded.model, ds, sampler_from_meta(loaded.meta));
  write_file_atomic(out, rep.to_json().dump(2));
  std::printf("frames %zu  mSSIM %.4f  mPSNR %.2f\n", rep.evaluated, rep.mean_ssim, rep.mean_psnr);
  return 0;
}

int run_synth(const std::string& out, int frames, int width, int height, bool no_box) {
  SyntheticSequenceOptions opt;
  opt.n_frames = frames;
  opt.width = width;
  opt.height = height;
  SyntheticScene scene;
  scene.with_box = !no_box;
  save_dataset(make_synthetic_sequence(opt, scene), out);
  std::printf("wrote %d frames to %s\n", frames, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dyn4d: dynamic radiance fields with score-distillation guidance"};
  app.require_subcommand(1);

  std::string data, config, out, provider, endpoint, token, ckpt, mode = "stabilized", poses;
  long seed = -1, iterations = 0;
  bool deterministic = false;
  auto* train_cmd = app.add_subcommand("train", "optimize a model on a dataset directory");
  train_cmd->add_option("--data", data, "dataset directory")->required();
  train_cmd->add_option("--config", config, "JSON training config");
  train_cmd->add_option("--out", out, "output directory")->required();
  train_cmd->add_option("--seed", seed, "random seed");
  train_cmd->add_option("--provider", provider, "score provider")->check(CLI::IsMember({"analytic", "remote"}));
  train_cmd->add_option("--endpoint", endpoint, "remote score service URL");
  train_cmd->add_option("--token", token, "bearer token for the score service");
  train_cmd->add_option("--iterations", iterations, "override the configured iteration count");
  train_cmd->add_flag("--deterministic", deterministic, "single worker thread");

  auto* render_cmd = app.add_subcommand("render", "render a camera/time trajectory");
  render_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
  render_cmd->add_option("--mode", mode, "bullet or stabilized")->check(CLI::IsMember({"bullet", "stabilized"}));
  render_cmd->add_option("--poses", poses, "JSON with cameras and timestamps")->required();
  render_cmd->add_option("--out", out, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "masked SSIM/PSNR on held-out frames");
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", data, "held-out dataset directory")->required();
  eval_cmd->add_option("--out", out, "report path")->required();

  int frames = 16, width = 64, height = 64;
  bool no_box = false;
  auto* synth_cmd = app.add_subcommand("synth", "write the synthetic room / moving box sequence");
  synth_cmd->add_option("--out", out, "output directory")->required();
  synth_cmd->add_option("--frames", frames, "frame count");
  synth_cmd->add_option("--width", width, "image width");
  synth_cmd->add_option("--height", height, "image height");
  synth_cmd->add_flag("--static", no_box, "leave out the moving box");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) return run_train(data, config, out, seed, provider, endpoint, token, deterministic, iterations);
    if (*render_cmd) return run_render(ckpt, mode, poses, out);
    if (*eval_cmd) return run_eval(ckpt, data, out);
    if (*synth_cmd) return run_synth(out, frames, width, height, no_box);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
