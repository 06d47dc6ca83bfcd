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

#include "vpg/server.h"

#include <cctype>
#include <chrono>
#include <functional>
#include <sstream>

#include "httplib.h"
#include "vpg/errors.h"
#include "vpg/log.h"

namespace vpg {

namespace {

using Handler = std::function<nlohmann::json(const httplib::Request&)>;

struct HttpError {
  int status;
  std::string message;
};

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::string required_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) throw HttpError{400, std::string("missing parameter '") + name + "'"};
  return req.get_param_value(name);
}

ImageSignature parse_signature(const std::string& hex) {
  try {
    return ImageSignature::from_hex(hex);
  } catch (const InvalidArgument& e) {
    throw HttpError{400, e.what()};
  }
}

}  // namespace

void LatencyHistogram::record(double ms) {
  std::lock_guard lock(mu_);
  size_t b = 0;
  while (b < kBoundsMs.size() && ms > kBoundsMs[b]) ++b;
  ++buckets_[b];
  ++count_;
  sum_ms_ += ms;
}

uint64_t LatencyHistogram::count() const {
  std::lock_guard lock(mu_);
  return count_;
}

nlohmann::json LatencyHistogram::to_json() const {
  std::lock_guard lock(mu_);
  nlohmann::json buckets = nlohmann::json::array();
  for (size_t b = 0; b < buckets_.size(); ++b) {
    nlohmann::json le = b < kBoundsMs.size() ? nlohmann::json(kBoundsMs[b]) : nlohmann::json("inf");
    buckets.push_back({{"le_ms", le}, {"count", buckets_[b]}});
  }
  return {{"count", count_}, {"sum_ms", sum_ms_}, {"buckets", buckets}};
}

Server::Server(Engine& engine) : engine_(engine), http_(std::make_unique<httplib::Server>()) { install_routes(); }

Server::~Server() { stop(); }

LatencyHistogram& Server::histogram(const std::string& endpoint) {
  std::lock_guard lock(hist_mu_);
  auto& h = histograms_[endpoint];
  if (!h) h = std::make_unique<LatencyHistogram>();
  return *h;
}

void Server::install_routes() {
  http_->Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    if (engine_.ready()) {
      reply(res, 200, {{"status", "ok"}});
    } else {
      reply(res, 503, {{"status", "loading"}});
    }
  });

  auto route = [this](const std::string& path, Handler handler) {
    LatencyHistogram& hist = histogram(path);
    http_->Get(path, [this, path, handler, &hist](const httplib::Request& req, httplib::Response& res) {
      const auto start = std::chrono::steady_clock::now();
      try {
        if (!engine_.ready()) throw HttpError{503, "index is loading"};
        reply(res, 200, handler(req));
      } catch (const HttpError& e) {
        reply(res, e.status, {{"error", e.message}});
      } catch (const UnknownEntityError& e) {
        reply(res, 404, {{"error", e.what()}});
      } catch (const InvalidArgument& e) {
        reply(res, 400, {{"error", e.what()}});
      } catch (const std::exception& e) {
        const uint64_t id = next_error_id_++;
        log_event(LogLevel::kError, "http.internal_error", {{"path", path}, {"error_id", id}, {"what", e.what()}});
        reply(res, 500, {{"error", "internal error"}, {"error_id", id}});
      }
      hist.record(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
    });
  };

  route("/v1/reverse", [this](const httplib::Request& req) {
    return engine_.reverse(parse_signature(required_param(req, "product"))).to_json();
  });

  route("/v1/forward", [this](const httplib::Request& req) {
    UserContext ctx;
    try {
      ctx = UserContext::make(req.has_param("gender") ? req.get_param_value("gender") : "",
                              req.has_param("country") ? req.get_param_value("country") : "");
    } catch (const InvalidArgument& e) {
      throw HttpError{400, e.what()};
    }
    const std::string scenes = required_param(req, "scene");
    if (scenes.find(',') == std::string::npos) return engine_.forward(parse_signature(scenes), ctx).to_json();
    std::vector<ImageSignature> sigs;
    std::stringstream in(scenes);
    for (std::string hex; std::getline(in, hex, ',');) sigs.push_back(parse_signature(hex));
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [sig, item] : engine_.forward_batch(sigs, ctx)) {
      out.push_back(item.result ? item.result->to_json()
                                : nlohmann::json{{"scene", sig.to_hex()}, {"error", item.error}});
    }
    return nlohmann::json{{"results", out}};
  });

  http_->Get("/v1/metrics", [this](const httplib::Request& req, httplib::Response& res) {
    if (req.has_param("format") && req.get_param_value("format") == "text") {
      res.set_content(metrics_text(), "text/plain");
    } else {
      reply(res, 200, metrics());
    }
  });
}

nlohmann::json Server::metrics() const {
  nlohmann::json out = engine_.metrics();
  nlohmann::json endpoints = nlohmann::json::object();
  std::lock_guard lock(hist_mu_);
  for (const auto& [path, hist] : histograms_) endpoints[path] = {{"latency", hist->to_json()}};
  out["endpoints"] = endpoints;
  return out;
}

std::string Server::metrics_text() const {
  // Flattened counters, one "name value" pair per line.
  std::ostringstream out;
  std::function<void(const std::string&, const nlohmann::json&)> flatten = [&](const std::string& prefix,
                                                                                const nlohmann::json& j) {
    if (j.is_object()) {
      for (const auto& [key, value] : j.items()) {
        std::string name = key;
        for (char& c : name) {
          if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
        }
        flatten(prefix.empty() ? name : prefix + "_" + name, value);
      }
    } else if (j.is_number()) {
      out << "vpg_" << prefix << ' ' << j.dump() << '\n';
    }
  };
  nlohmann::json m = metrics();
  for (auto& [path, endpoint] : m["endpoints"].items()) {
    auto& latency = endpoint["latency"];
    latency.erase("buckets");
  }
  flatten("", m);
  return out.str();
}

int Server::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = http_->bind_to_any_port(host);
    if (bound < 0) throw InvalidArgument("cannot bind " + host);
    return bound;
  }
  if (!http_->bind_to_port(host, port)) throw InvalidArgument("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void Server::listen() { http_->listen_after_bind(); }

void Server::stop() {
  if (http_) http_->stop();
}

bool Server::running() const { return http_->is_running(); }

}  // namespace vpg
