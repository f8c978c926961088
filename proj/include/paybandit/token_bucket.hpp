#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "paybandit/errors.hpp"
#include "paybandit/types.hpp"
#include "paybandit/util.hpp"

namespace paybandit {

struct RateLimitConfig {
  std::map<GatewayId, std::uint64_t> caps;
  Timestamp granularity_ns = kNanosPerSecond;

  void validate() const {
    if (granularity_ns <= 0) throw ConfigError("granularity must be positive");
    for (const auto& [g, cap] : caps) {
      if (cap < 1) throw ConfigError("rate cap for '" + g + "' must be >= 1");
    }
  }
};

// Quantized token bucket.  Capacity equals a single refill granule, which is
// what bounds grants in any 1-second window by cap + one granule: the bucket
// can hold at most one granule up front and refills exactly cap tokens per
// second thereafter.  A classic full-cap bucket would allow nearly 2x cap in
// a window straddling a drained burst.
class TokenBucket {
 public:
  TokenBucket() = default;

  TokenBucket(std::uint64_t cap, Timestamp granularity_ns, Timestamp now)
      : cap_(cap),
        granularity_ns_(granularity_ns),
        granule_(static_cast<double>(cap) * static_cast<double>(granularity_ns) /
                 static_cast<double>(kNanosPerSecond)),
        capacity_(std::max(1.0, granule_)),
        tokens_(capacity_),
        last_tick_(now) {}

  bool try_acquire(Timestamp now) {
    refill(now);
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return true;
    }
    return false;
  }

  bool has_token(Timestamp now) {
    refill(now);
    return tokens_ >= 1.0;
  }

  double tokens() const { return tokens_; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["tokens"] = tokens_;
    j["last_tick"] = last_tick_;
    return j;
  }

  void restore(double tokens, Timestamp last_tick) {
    tokens_ = std::clamp(tokens, 0.0, capacity_);
    last_tick_ = last_tick;
  }

 private:
  void refill(Timestamp now) {
    if (now <= last_tick_) return;
    const std::int64_t ticks = (now - last_tick_) / granularity_ns_;
    if (ticks <= 0) return;
    tokens_ = std::min(capacity_, tokens_ + static_cast<double>(ticks) * granule_);
    last_tick_ += ticks * granularity_ns_;
  }

  std::uint64_t cap_ = 0;
  Timestamp granularity_ns_ = kNanosPerSecond;
  double granule_ = 0.0;
  double capacity_ = 0.0;
  double tokens_ = 0.0;
  Timestamp last_tick_ = 0;
};

// Per-gateway limiter.  Gateways without a configured cap are uncapped and
// always grant.
class RateLimiter {
 public:
  RateLimiter() = default;

  RateLimiter(const RateLimitConfig& config, Timestamp now) {
    config.validate();
    granularity_ns_ = config.granularity_ns;
    for (const auto& [g, cap] : config.caps) {
      buckets_.emplace(g, TokenBucket(cap, config.granularity_ns, now));
    }
  }

  bool configured(const GatewayId& g) const {
    return buckets_.count(g) != 0;
  }

  bool try_acquire(const GatewayId& g, Timestamp now) {
    std::lock_guard<std::mutex> lock(mu_);
    return bucket(g).try_acquire(now);
  }

  bool has_token(const GatewayId& g, Timestamp now) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = buckets_.find(g);
    if (it == buckets_.end()) return true;
    return it->second.has_token(now);
  }

  // Uncapped gateways always pass; capped ones consume a token.
  bool admit(const GatewayId& g, Timestamp now) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = buckets_.find(g);
    if (it == buckets_.end()) return true;
    return it->second.try_acquire(now);
  }

  nlohmann::json to_json() const {
    std::lock_guard<std::mutex> lock(mu_);
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [g, b] : buckets_) j[g] = b.to_json();
    return j;
  }

  void restore(const nlohmann::json& j) {
    std::lock_guard<std::mutex> lock(mu_);
    for (auto it = j.begin(); it != j.end(); ++it) {
      auto b = buckets_.find(it.key());
      if (b == buckets_.end()) continue;  // cap removed from config; drop state
      b->second.restore(it.value().at("tokens").get<double>(),
                        it.value().at("last_tick").get<Timestamp>());
    }
  }

 private:
  TokenBucket& bucket(const GatewayId& g) {
    auto it = buckets_.find(g);
    if (it == buckets_.end()) throw UnknownGatewayError(g);
    return it->second;
  }

  mutable std::mutex mu_;
  Timestamp granularity_ns_ = kNanosPerSecond;
  std::map<GatewayId, TokenBucket> buckets_;
};

}  // namespace paybandit
