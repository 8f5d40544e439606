#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include "dyn4d/core/io.hpp"
#include "dyn4d/fields/scene_model.hpp"
#include "json.hpp"

namespace dyn4d {

/// Checkpoint layout:
///   7 bytes   magic "DYN4D01"
///   8 bytes   manifest length N, unsigned little-endian
///   N bytes   JSON manifest {"model": ModelConfig, "meta": {...},
///             "params": [{"name", "dtype": "f32", "shape", "offset"}]}
///   payload   float32 little-endian arrays; "offset" is in bytes from the payload start
inline constexpr std::string_view kCheckpointMagic = "DYN4D01";

template <typename T>
std::string serialize_checkpoint(const SceneModel<T>& model, const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json manifest;
  manifest["model"] = model.config();
  manifest["meta"] = meta;
  manifest["params"] = nlohmann::json::array();
  std::string payload;
  model.parameters().for_each([&](const Parameter<T>& p) {
    manifest["params"].push_back({{"name", p.name}, {"dtype", "f32"}, {"shape", p.shape}, {"offset", payload.size()}});
    for (T v : p.value) {
      const float f = static_cast<float>(v);
      payload.append(reinterpret_cast<const char*>(&f), sizeof(float));
    }
  });
  const std::string text = manifest.dump();
  const std::uint64_t len = text.size();
  std::string out(kCheckpointMagic);
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += text;
  out += payload;
  return out;
}

struct LoadedCheckpoint {
  SceneModel<float> model;
  nlohmann::json meta;
};

inline LoadedCheckpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() + 8 || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw LoadError("checkpoint: bad magic");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + kCheckpointMagic.size(), sizeof(len));
  const std::size_t header = kCheckpointMagic.size() + sizeof(len);
  if (len > bytes.size() - header) throw LoadError("checkpoint: truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(header, len));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint manifest: ") + e.what());
  }
  const std::string_view payload = bytes.substr(header + len);

  SceneModel<float> model(manifest.at("model").get<ModelConfig>());
  for (const auto& entry : manifest.at("params")) {
    const auto name = entry.at("name").get<std::string>();
    Parameter<float>* p = model.parameters().find(name);
    if (!p) throw LoadError("checkpoint: unknown parameter " + name);
    if (entry.at("dtype").get<std::string>() != "f32") throw LoadError("checkpoint: unsupported dtype for " + name);
    if (entry.at("shape").get<std::vector<std::size_t>>() != p->shape) throw LoadError("checkpoint: shape mismatch for " + name);
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    const std::size_t nbytes = p->size() * sizeof(float);
    if (offset > payload.size() || nbytes > payload.size() - offset) throw LoadError("checkpoint: truncated payload for " + name);
    std::memcpy(p->value.data(), payload.data() + offset, nbytes);
  }
  if (manifest.at("params").size() != model.parameters().count()) throw LoadError("checkpoint: parameter count mismatch");
  return {std::move(model), manifest.value("meta", nlohmann::json::object())};
}

template <typename T>
void save_checkpoint(const SceneModel<T>& model, const std::filesystem::path& path,
                     const nlohmann::json& meta = nlohmann::json::object()) {
  write_file_atomic(path, serialize_checkpoint(model, meta));
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace dyn4d
