#pragma once

#include <bit>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "dyn4d/core/base64.hpp"
#include "dyn4d/core/error.hpp"
#include "dyn4d/guidance/diffusion.hpp"

namespace dyn4d {

/// {shape: [C,H,W], dtype: "f32", data: base64 of little-endian float32}
inline nlohmann::json tensor_to_json(const LatentTensor& t) {
  std::string bytes(t.size() * 4, '\0');
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto v = std::bit_cast<std::uint32_t>(t.data[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((v >> (8 * b)) & 0xFF);
  }
  return {{"shape", {t.channels, t.height, t.width}}, {"dtype", "f32"}, {"data", base64::encode(bytes)}};
}

inline LatentTensor tensor_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("data")) {
    throw ProtocolError("tensor envelope: missing shape or data");
  }
  if (j.value("dtype", std::string("f32")) != "f32") throw ProtocolError("tensor envelope: unsupported dtype");
  const auto& shape = j.at("shape");
  if (!shape.is_array() || shape.size() != 3) throw ProtocolError("tensor envelope: shape must be [C,H,W]");
  for (const auto& s : shape)
    if (!s.is_number_integer() || s.get<long>() < 0) throw ProtocolError("tensor envelope: bad shape entry");
  if (!j.at("data").is_string()) throw ProtocolError("tensor envelope: data must be a base64 string");
  LatentTensor t(shape[0].get<int>(), shape[1].get<int>(), shape[2].get<int>());
  const std::string bytes = base64::decode(j.at("data").get<std::string>());
  if (bytes.size() != t.size() * 4) {
    throw ProtocolError("tensor envelope: " + std::to_string(bytes.size()) + " bytes for shape " + t.shape_string());
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    t.data[i] = std::bit_cast<float>(v);
  }
  return t;
}

struct RemoteOptions {
  std::string endpoint;  // http://host:port[/prefix]
  std::string token;     // bearer token; empty sends no Authorization header
  DiffusionSchedule schedule;
  int max_retries = 3;
  int backoff_ms = 200;  // doubled after every failed attempt
  double timeout_seconds = 60.0;
};

/// Score provider behind the HTTP denoise service. The schedule is checked against
/// GET /v1/health before the first request.
class RemoteProvider : public ScoreProvider {
 public:
  explicit RemoteProvider(RemoteOptions opt) : opt_(std::move(opt)) {
    const auto scheme = opt_.endpoint.find("://");
    if (scheme == std::string::npos) throw ValidationError("remote provider: endpoint needs a scheme: " + opt_.endpoint);
    const auto slash = opt_.endpoint.find('/', scheme + 3);
    base_ = opt_.endpoint.substr(0, slash);
    if (slash != std::string::npos) prefix_ = opt_.endpoint.substr(slash);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  /// Fetches the service schedule and compares it with ours.
  void handshake() {
    const nlohmann::json body = request("GET", "/v1/health", {});
    DiffusionSchedule remote;
    try {
      remote = body.at("schedule").get<DiffusionSchedule>();
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("health: malformed schedule: ") + e.what());
    }
    if (!(remote == opt_.schedule)) {
      throw ProtocolError("health: schedule mismatch, local " + nlohmann::json(opt_.schedule).dump() + ", service " +
                          nlohmann::json(remote).dump());
    }
    checked_ = true;
  }

  LatentTensor predict(const LatentTensor& z_t, int t_index, const std::string& condition, double cfg_weight) override {
    if (!checked_) handshake();
    const nlohmann::json req = {{"schedule", opt_.schedule},
                                {"t_index", t_index},
                                {"cfg_weight", cfg_weight},
                                {"condition", condition},
                                {"latent", tensor_to_json(z_t)}};
    const nlohmann::json body = request("POST", "/v1/denoise", req.dump());
    if (!body.contains("noise_pred")) throw ProtocolError("denoise: response has no noise_pred");
    LatentTensor out = tensor_from_json(body.at("noise_pred"));
    if (!out.same_shape(z_t)) {
      throw ProtocolError("denoise: expected shape " + z_t.shape_string() + ", received " + out.shape_string());
    }
    return out;
  }

  int attempts_made() const { return attempts_; }

 private:
  nlohmann::json request(const std::string& method, const std::string& path, const std::string& payload) {
    const std::string url = opt_.endpoint + path;
    int delay = opt_.backoff_ms;
    for (int attempt = 0;; ++attempt) {
      ++attempts_;
      try {
        return request_once(method, path, payload, url);
      } catch (const TransportError&) {
        if (attempt >= opt_.max_retries) throw;
      } catch (const HttpStatusError& e) {
        const bool transient = e.status() >= 500 || e.status() == 429;
        if (!transient || attempt >= opt_.max_retries) throw;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      delay *= 2;
    }
  }

  nlohmann::json request_once(const std::string& method, const std::string& path, const std::string& payload,
                              const std::string& url) {
    httplib::Client cli(base_);
    if (!cli.is_valid()) throw ValidationError("remote provider: unsupported endpoint " + opt_.endpoint);
    const auto secs = std::chrono::duration<double>(opt_.timeout_seconds);
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
    cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
    if (!opt_.token.empty()) cli.set_bearer_token_auth(opt_.token);
    auto res = method == "GET" ? cli.Get(prefix_ + path) : cli.Post(prefix_ + path, payload, "application/json");
    if (!res) {
      const auto err = res.error();
      const bool timeout = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
      throw TransportError(method + " " + url + ": " + (timeout ? "timeout (" : "") + httplib::to_string(err) +
                           (timeout ? ")" : ""));
    }
    if (res->status >= 400) {
      throw HttpStatusError(res->status, method + " " + url + ": HTTP " + std::to_string(res->status) + " " +
                                             res->body.substr(0, 200));
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(method + " " + url + ": malformed JSON: " + e.what());
    }
  }

  RemoteOptions opt_;
  std::string base_, prefix_;
  bool checked_ = false;
  int attempts_ = 0;
};

}  // namespace dyn4d
