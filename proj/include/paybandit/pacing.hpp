#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paybandit/errors.hpp"
#include "paybandit/types.hpp"
#include "paybandit/util.hpp"

namespace paybandit {

struct PacingConfig {
  std::map<GatewayId, std::uint64_t> minima;
  Timestamp horizon_ns = 24 * 3600 * kNanosPerSecond;
  double slack = 10.0;

  void validate() const {
    if (horizon_ns <= 0) throw ConfigError("pacing horizon must be positive");
    if (slack < 0.0) throw ConfigError("pacing slack must be non-negative");
  }

  bool active() const {
    for (const auto& [g, m] : minima) {
      if (m > 0) return true;
    }
    return false;
  }
};

// Tracks routed volume per gateway against a linear pace toward each daily
// minimum.  When a gateway trails its pace target by more than the slack, it
// is a candidate for a forced route; the most-behind candidate wins.
class Pacer {
 public:
  Pacer() = default;

  Pacer(PacingConfig config, Timestamp now)
      : config_(std::move(config)), window_start_(now) {
    config_.validate();
  }

  void record(const GatewayId& g, Timestamp now) {
    std::lock_guard<std::mutex> lock(mu_);
    roll_window(now);
    ++routed_[g];
  }

  std::optional<GatewayId> override_candidate(
      const std::vector<GatewayId>& eligible, Timestamp now) {
    std::lock_guard<std::mutex> lock(mu_);
    roll_window(now);
    const double frac =
        static_cast<double>(now - window_start_) /
        static_cast<double>(config_.horizon_ns);
    std::optional<GatewayId> best;
    double best_deficit = config_.slack;
    for (const auto& g : eligible) {
      auto it = config_.minima.find(g);
      if (it == config_.minima.end() || it->second == 0) continue;
      const double target = static_cast<double>(it->second) * frac;
      const double routed = static_cast<double>(routed_[g]);
      const double deficit = target - routed;
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = g;
      }
    }
    return best;
  }

  std::uint64_t routed(const GatewayId& g) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = routed_.find(g);
    return it == routed_.end() ? 0 : it->second;
  }

  nlohmann::json to_json() const {
    std::lock_guard<std::mutex> lock(mu_);
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [g, n] : routed_) counts[g] = n;
    nlohmann::json j;
    j["window_start"] = window_start_;
    j["routed"] = std::move(counts);
    return j;
  }

  void restore(const nlohmann::json& j) {
    std::lock_guard<std::mutex> lock(mu_);
    window_start_ = j.at("window_start").get<Timestamp>();
    routed_.clear();
    for (auto it = j.at("routed").begin(); it != j.at("routed").end(); ++it) {
      routed_[it.key()] = it.value().get<std::uint64_t>();
    }
  }

 private:
  // Counters reset when the horizon rolls over; the obligation is per window.
  void roll_window(Timestamp now) {
    if (now - window_start_ < config_.horizon_ns) return;
    const Timestamp periods = (now - window_start_) / config_.horizon_ns;
    window_start_ += periods * config_.horizon_ns;
    routed_.clear();
  }

  mutable std::mutex mu_;
  PacingConfig config_;
  Timestamp window_start_ = 0;
  std::map<GatewayId, std::uint64_t> routed_;
};

}  // namespace paybandit
