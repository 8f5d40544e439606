// Loopback stand-in for the denoise service.
#pragma once

#include <atomic>
#include <functional>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

class MockScoreServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&, int call)>;

  explicit MockScoreServer(Handler denoise, nlohmann::json schedule = {{"n_steps", 1000},
                                                                        {"beta_min", 1e-4},
                                                                        {"beta_max", 2e-2}})
      : denoise_(std::move(denoise)), schedule_(std::move(schedule)) {
    server_.Get("/v1/health", [this](const httplib::Request& req, httplib::Response& res) {
      last_auth_ = req.get_header_value("Authorization");
      ++health_calls_;
      res.set_content(nlohmann::json{{"status", "ok"}, {"schedule", schedule_}}.dump(), "application/json");
    });
    server_.Post("/v1/denoise", [this](const httplib::Request& req, httplib::Response& res) {
      last_auth_ = req.get_header_value("Authorization");
      last_body_ = req.body;
      denoise_(req, res, denoise_calls_++);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockScoreServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int denoise_calls() const { return denoise_calls_; }
  int health_calls() const { return health_calls_; }
  const std::string& last_auth() const { return last_auth_; }
  const std::string& last_body() const { return last_body_; }

 private:
  httplib::Server server_;
  Handler denoise_;
  nlohmann::json schedule_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> denoise_calls_{0}, health_calls_{0};
  std::string last_auth_, last_body_;
};
