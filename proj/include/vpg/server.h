// Copyright 2026 The VPG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "json.hpp"
#include "vpg/engine.h"

namespace httplib {
class Server;
}

namespace vpg {

// Request latency counts per fixed millisecond bucket.
class LatencyHistogram {
 public:
  static constexpr std::array<double, 12> kBoundsMs{0.5, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 5000};

  void record(double ms);
  uint64_t count() const;
  nlohmann::json to_json() const;

 private:
  mutable std::mutex mu_;
  std::array<uint64_t, kBoundsMs.size() + 1> buckets_{};
  uint64_t count_ = 0;
  double sum_ms_ = 0;
};

// HTTP front end over a shared Engine:
//   GET /healthz                              503 until the engine is loaded
//   GET /v1/reverse?product=HEX
//   GET /v1/forward?scene=HEX[,HEX...]&gender=..&country=..
//   GET /v1/metrics[?format=text]
// Errors: 400 malformed parameters, 404 unknown signature, 500 with an opaque id.
class Server {
 public:
  explicit Server(Engine& engine);
  ~Server();

  // Returns the bound port (an ephemeral one when port is 0).
  int bind(const std::string& host, int port);
  // Serves until stop(); in-flight requests finish before it returns.
  void listen();
  void stop();
  bool running() const;

  nlohmann::json metrics() const;
  std::string metrics_text() const;

 private:
  void install_routes();
  LatencyHistogram& histogram(const std::string& endpoint);

  Engine& engine_;
  std::unique_ptr<httplib::Server> http_;
  mutable std::mutex hist_mu_;
  std::map<std::string, std::unique_ptr<LatencyHistogram>> histograms_;
  std::atomic<uint64_t> next_error_id_{1};
};

}  // namespace vpg
