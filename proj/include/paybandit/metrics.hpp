#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <limits>

#include <nlohmann/json.hpp>

namespace paybandit {

// Fixed-boundary histogram of decision latencies in microseconds.  Lock-free
// on the record path; percentiles are reported as the upper edge of the
// bucket containing the target rank.
class LatencyHistogram {
 public:
  static constexpr std::array<std::uint64_t, 17> kUpperBoundsUs = {
      1,    2,    5,     10,    20,    50,     100,    200,   500,
      1000, 2000, 5000,  10000, 20000, 50000,  100000, std::numeric_limits<std::uint64_t>::max()};

  void record_us(std::uint64_t us) {
    std::size_t i = 0;
    while (us > kUpperBoundsUs[i]) ++i;
    counts_[i].fetch_add(1, std::memory_order_relaxed);
  }

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto& c : counts_) n += c.load(std::memory_order_relaxed);
    return n;
  }

  // Upper edge of the bucket holding the q-quantile observation, or 0 when
  // empty.  The top bucket reports its lower neighbor's edge rather than max.
  std::uint64_t quantile_us(double q) const {
    std::array<std::uint64_t, kUpperBoundsUs.size()> snap{};
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < snap.size(); ++i) {
      snap[i] = counts_[i].load(std::memory_order_relaxed);
      n += snap[i];
    }
    if (n == 0) return 0;
    const auto rank = static_cast<std::uint64_t>(q * static_cast<double>(n - 1));
    std::uint64_t seen = 0;
    for (std::size_t i = 0; i < snap.size(); ++i) {
      seen += snap[i];
      if (seen > rank) {
        if (i + 1 == snap.size()) return kUpperBoundsUs[i - 1] * 2;
        return kUpperBoundsUs[i];
      }
    }
    return kUpperBoundsUs.back();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    const auto n = total();
    j["count"] = n;
    if (n > 0) {
      j["p50_us"] = quantile_us(0.50);
      j["p99_us"] = quantile_us(0.99);
    } else {
      j["p50_us"] = nullptr;
      j["p99_us"] = nullptr;
    }
    return j;
  }

 private:
  std::array<std::atomic<std::uint64_t>, kUpperBoundsUs.size()> counts_{};
};

// Per-arm decision and reward counters.  Plain atomics: each field is a
// monotonic count and cross-field exactness is not required on the hot path.
struct ArmCounters {
  std::atomic<std::uint64_t> routed{0};
  std::atomic<std::uint64_t> rewarded{0};
  std::atomic<std::uint64_t> successes{0};

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["routed"] = routed.load();
    j["rewarded"] = rewarded.load();
    j["successes"] = successes.load();
    return j;
  }

  void restore(const nlohmann::json& j) {
    routed.store(j.at("routed").get<std::uint64_t>());
    rewarded.store(j.at("rewarded").get<std::uint64_t>());
    successes.store(j.at("successes").get<std::uint64_t>());
  }
};

struct ServiceCounters {
  std::atomic<std::uint64_t> rate_limit_rejections{0};
  std::atomic<std::uint64_t> pacing_overrides{0};
  std::atomic<std::uint64_t> pacing_blocked{0};
  std::atomic<std::uint64_t> late_rewards{0};
  std::atomic<std::uint64_t> duplicate_rewards{0};
  std::atomic<std::uint64_t> unknown_rewards{0};

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["rate_limit_rejections"] = rate_limit_rejections.load();
    j["pacing_overrides"] = pacing_overrides.load();
    j["pacing_blocked"] = pacing_blocked.load();
    j["late_rewards"] = late_rewards.load();
    j["duplicate_rewards"] = duplicate_rewards.load();
    j["unknown_rewards"] = unknown_rewards.load();
    return j;
  }

  void restore(const nlohmann::json& j) {
    rate_limit_rejections.store(j.at("rate_limit_rejections").get<std::uint64_t>());
    pacing_overrides.store(j.at("pacing_overrides").get<std::uint64_t>());
    pacing_blocked.store(j.at("pacing_blocked").get<std::uint64_t>());
    late_rewards.store(j.at("late_rewards").get<std::uint64_t>());
    duplicate_rewards.store(j.at("duplicate_rewards").get<std::uint64_t>());
    unknown_rewards.store(j.at("unknown_rewards").get<std::uint64_t>());
  }
};

}  // namespace paybandit
