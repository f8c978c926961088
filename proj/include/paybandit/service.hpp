#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paybandit/errors.hpp"
#include "paybandit/experiment.hpp"
#include "paybandit/metrics.hpp"
#include "paybandit/pacing.hpp"
#include "paybandit/pending.hpp"
#include "paybandit/policy.hpp"
#include "paybandit/token_bucket.hpp"
#include "paybandit/types.hpp"
#include "paybandit/util.hpp"

namespace paybandit {

inline constexpr int kSnapshotVersion = 1;

struct ServiceConfig {
  RoutingTable routing;
  ExperimentConfig experiment;
  RateLimitConfig rate_limit;
  PacingConfig pacing;
  std::string snapshot_path;
  Timestamp snapshot_interval_ns = 30 * kNanosPerSecond;
  Timestamp pending_ttl_ns = 120 * kNanosPerSecond;
  std::size_t pending_capacity = 1000000;
  int port = 8080;
  std::size_t threads = 8;

  void validate() const {
    experiment.validate();
    const auto& gws = routing.gateways();
    auto known = [&gws](const GatewayId& g) {
      return std::find(gws.begin(), gws.end(), g) != gws.end();
    };
    for (const auto& [g, cap] : rate_limit.caps) {
      if (!known(g)) throw ConfigError("rate cap for unknown gateway '" + g + "'");
    }
    rate_limit.validate();
    for (const auto& [g, m] : pacing.minima) {
      if (!known(g)) {
        throw ConfigError("pacing minimum for unknown gateway '" + g + "'");
      }
    }
    pacing.validate();
    for (const auto& arm : experiment.arms) {
      arm.policy.validate(routing.max_eligible_size());
      if (arm.policy.kind == PolicyKind::RuleBased) {
        for (const auto& g : arm.policy.priority) {
          if (!known(g)) {
            throw ConfigError("priority gateway '" + g +
                              "' is not in the routing table");
          }
        }
        for (const auto& [proc, eligible] : routing.processors()) {
          bool covered = false;
          for (const auto& g : arm.policy.priority) {
            covered = covered ||
                      std::find(eligible.begin(), eligible.end(), g) !=
                          eligible.end();
          }
          if (!covered) {
            throw ConfigError("priority list of arm '" + arm.label +
                              "' covers no gateway of processor '" + proc + "'");
          }
        }
      }
    }
    if (port < 1 || port > 65535) throw ConfigError("port out of range");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (pending_ttl_ns <= 0) throw ConfigError("pending TTL must be positive");
    if (pending_capacity < 1) {
      throw ConfigError("pending capacity must be >= 1");
    }
    if (snapshot_interval_ns <= 0) {
      throw ConfigError("snapshot interval must be positive");
    }
  }

  static ServiceConfig from_json(const nlohmann::json& j) {
    ServiceConfig c;
    if (!j.contains("routing")) throw ConfigError("config requires 'routing'");
    c.routing = RoutingTable::from_json(j.at("routing"));
    if (!j.contains("experiment")) {
      throw ConfigError("config requires 'experiment'");
    }
    c.experiment = ExperimentConfig::from_json(j.at("experiment"));
    if (j.contains("rate_limit")) {
      const auto& r = j.at("rate_limit");
      if (r.contains("caps")) {
        for (auto it = r.at("caps").begin(); it != r.at("caps").end(); ++it) {
          c.rate_limit.caps[it.key()] = it.value().get<std::uint64_t>();
        }
      }
      if (r.contains("granularity_ms")) {
        c.rate_limit.granularity_ns =
            r.at("granularity_ms").get<Timestamp>() * kNanosPerMilli;
      }
    }
    if (j.contains("pacing")) {
      const auto& p = j.at("pacing");
      if (p.contains("minima")) {
        for (auto it = p.at("minima").begin(); it != p.at("minima").end();
             ++it) {
          c.pacing.minima[it.key()] = it.value().get<std::uint64_t>();
        }
      }
      if (p.contains("horizon_seconds")) {
        c.pacing.horizon_ns =
            p.at("horizon_seconds").get<Timestamp>() * kNanosPerSecond;
      }
      if (p.contains("slack")) c.pacing.slack = p.at("slack").get<double>();
    }
    if (j.contains("snapshot")) {
      const auto& s = j.at("snapshot");
      if (s.contains("path")) c.snapshot_path = s.at("path").get<std::string>();
      if (s.contains("interval_seconds")) {
        c.snapshot_interval_ns = static_cast<Timestamp>(
            s.at("interval_seconds").get<double>() * double(kNanosPerSecond));
      }
    }
    if (j.contains("pending_ttl_seconds")) {
      c.pending_ttl_ns = static_cast<Timestamp>(
          j.at("pending_ttl_seconds").get<double>() * double(kNanosPerSecond));
    }
    if (j.contains("pending_capacity")) {
      c.pending_capacity = j.at("pending_capacity").get<std::size_t>();
    }
    if (j.contains("port")) c.port = j.at("port").get<int>();
    if (j.contains("threads")) c.threads = j.at("threads").get<std::size_t>();
    c.validate();
    return c;
  }
};

struct RouteRequest {
  std::string txn_id;
  ProcessorId processor;
  double amount = 0.0;
  std::optional<std::string> arm_override;
};

struct RouteDecision {
  std::string txn_id;
  GatewayId gateway;
  std::string arm;
  std::string policy;
  Timestamp decided_at = 0;
};

struct RewardResult {
  bool applied = false;
  bool late = false;
};

// Single-process decision service: hash-splits traffic across experiment
// arms, runs the arm's policy over rate-limit-filtered eligible sets, buffers
// decisions for delayed rewards, and persists everything to checksummed
// snapshots.  Policy mutation is serialized per arm; route and reward take
// the state lock shared, snapshots take it exclusive for a clean cut.
class Service {
 public:
  explicit Service(ServiceConfig config, Clock clock = steady_clock_ns())
      : config_(std::move(config)),
        clock_(std::move(clock)),
        limiter_(config_.rate_limit, clock_()),
        pacer_(config_.pacing, clock_()),
        pacing_active_(config_.pacing.active()),
        pending_(config_.pending_ttl_ns, config_.pending_capacity) {
    config_.validate();
    for (const auto& arm : config_.experiment.arms) {
      auto rt = std::make_unique<ArmRuntime>();
      rt->label = arm.label;
      rt->policy = PolicyState(arm.policy, config_.routing.gateways());
      arms_.push_back(std::move(rt));
    }
  }

  const ServiceConfig& config() const { return config_; }

  RouteDecision route(const RouteRequest& req) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shared_lock state_lock(state_mu_);
    const Timestamp now = clock_();
    if (!config_.routing.has_processor(req.processor)) {
      throw UnknownProcessorError(req.processor);
    }
    if (req.txn_id.empty()) throw ConfigError("txn_id must be non-empty");
    if (pending_.known(req.txn_id)) throw DuplicateTxnIdError(req.txn_id);
    const auto& eligible = config_.routing.eligible(req.processor);
    const std::size_t arm_index =
        req.arm_override ? config_.experiment.index_of(*req.arm_override)
                         : config_.experiment.assign_index(req.txn_id);
    ArmRuntime& arm = *arms_[arm_index];

    GatewayId chosen;
    bool decided = false;
    if (pacing_active_) {
      if (auto forced = pacer_.override_candidate(eligible, now)) {
        if (limiter_.admit(*forced, now)) {
          chosen = *forced;
          decided = true;
          counters_.pacing_overrides.fetch_add(1);
        } else {
          counters_.pacing_blocked.fetch_add(1);
        }
      }
    }
    for (std::size_t attempt = 0; !decided && attempt <= eligible.size();
         ++attempt) {
      std::vector<GatewayId> open;
      open.reserve(eligible.size());
      for (const auto& g : eligible) {
        if (limiter_.has_token(g, now)) open.push_back(g);
      }
      if (open.empty()) break;
      GatewayId candidate;
      {
        std::lock_guard<std::mutex> arm_lock(arm.mu);
        candidate = arm.policy.select(open);
      }
      if (limiter_.admit(candidate, now)) {
        chosen = candidate;
        decided = true;
      }
    }
    if (!decided) {
      counters_.rate_limit_rejections.fetch_add(1);
      throw AllRateLimitedError();
    }

    if (pacing_active_) pacer_.record(chosen, now);
    arm.counters.routed.fetch_add(1);
    pending_.insert(req.txn_id, PendingEntry{arm_index, chosen, now});

    RouteDecision decision;
    decision.txn_id = req.txn_id;
    decision.gateway = chosen;
    decision.arm = arm.label;
    decision.policy = to_string(arm.policy.config().kind);
    decision.decided_at = now;
    latency_.record_us(static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(
            std::chrono::steady_clock::now() - t0)
            .count()));
    return decision;
  }

  RewardResult reward(const std::string& txn_id, int success) {
    std::shared_lock state_lock(state_mu_);
    const Timestamp now = clock_();
    const auto taken = pending_.take(txn_id, now);
    switch (taken.result) {
      case PendingTable::TakeResult::Unknown:
        counters_.unknown_rewards.fetch_add(1);
        throw UnknownTxnError(txn_id);
      case PendingTable::TakeResult::Duplicate:
        counters_.duplicate_rewards.fetch_add(1);
        throw DuplicateRewardError(txn_id);
      case PendingTable::TakeResult::Late:
        counters_.late_rewards.fetch_add(1);
        return {false, true};
      case PendingTable::TakeResult::Applied:
        break;
    }
    ArmRuntime& arm = *arms_[taken.entry.arm_index];
    {
      std::lock_guard<std::mutex> arm_lock(arm.mu);
      arm.policy.update(taken.entry.gateway, success);
    }
    arm.counters.rewarded.fetch_add(1);
    arm.counters.successes.fetch_add(static_cast<std::uint64_t>(success));
    return {true, false};
  }

  nlohmann::json metrics() const {
    std::shared_lock state_lock(state_mu_);
    nlohmann::json arms = nlohmann::json::object();
    std::optional<double> baseline_rate;
    std::string baseline_label;
    for (const auto& arm : arms_) {
      if (arm->policy.config().kind == PolicyKind::RuleBased) {
        baseline_label = arm->label;
        const auto rewarded = arm->counters.rewarded.load();
        if (rewarded > 0) {
          baseline_rate = static_cast<double>(arm->counters.successes.load()) /
                          static_cast<double>(rewarded);
        }
        break;
      }
    }
    for (const auto& arm : arms_) {
      nlohmann::json a = arm->counters.to_json();
      a["policy"] = to_string(arm->policy.config().kind);
      const auto rewarded = arm->counters.rewarded.load();
      if (rewarded > 0) {
        const double rate =
            static_cast<double>(arm->counters.successes.load()) /
            static_cast<double>(rewarded);
        a["success_rate"] = rate;
        if (baseline_rate && arm->label != baseline_label) {
          a["uplift_vs_baseline"] = rate - *baseline_rate;
        } else {
          a["uplift_vs_baseline"] = nullptr;
        }
      } else {
        a["success_rate"] = nullptr;
        a["uplift_vs_baseline"] = nullptr;
      }
      arms[arm->label] = std::move(a);
    }
    nlohmann::json j;
    j["arms"] = std::move(arms);
    j["baseline_arm"] =
        baseline_label.empty() ? nlohmann::json() : nlohmann::json(baseline_label);
    j["counters"] = counters_.to_json();
    j["pending"] = pending_.size();
    j["expired_pending"] = pending_.expired();
    j["latency"] = latency_.to_json();
    return j;
  }

  // The cut is taken under the exclusive state lock; file I/O happens after
  // the lock is dropped so the decision path never waits on disk.
  void snapshot(const std::string& path) {
    nlohmann::json payload;
    {
      std::unique_lock state_lock(state_mu_);
      payload = serialize_state();
    }
    nlohmann::json file;
    file["version"] = kSnapshotVersion;
    file["checksum"] = checksum_hex(payload);
    file["payload"] = std::move(payload);
    write_file_atomic(path, file.dump(2) + "\n");
  }

  static std::unique_ptr<Service> restore(ServiceConfig config,
                                          const std::string& path,
                                          Clock clock = steady_clock_ns()) {
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
      throw CorruptSnapshotError(std::string("snapshot is not valid JSON: ") +
                                 e.what());
    }
    if (!file.is_object() || !file.contains("version")) {
      throw CorruptSnapshotError("snapshot has no version field");
    }
    if (!file.at("version").is_number_integer() ||
        file.at("version").get<int>() != kSnapshotVersion) {
      throw VersionMismatchError("unsupported snapshot version " +
                                 file.at("version").dump());
    }
    if (!file.contains("checksum") || !file.contains("payload")) {
      throw CorruptSnapshotError("snapshot missing checksum or payload");
    }
    const auto& payload = file.at("payload");
    if (file.at("checksum").get<std::string>() != checksum_hex(payload)) {
      throw CorruptSnapshotError("checksum mismatch");
    }

    auto svc = std::make_unique<Service>(std::move(config), std::move(clock));
    const auto& arms = payload.at("arms");
    if (arms.size() != svc->arms_.size()) {
      throw ConfigError("snapshot arm count does not match config");
    }
    for (const auto& a : arms) {
      const auto label = a.at("label").get<std::string>();
      const std::size_t idx = svc->config_.experiment.index_of(label);
      auto state = PolicyState::from_json(a.at("policy_state"));
      if (!(state.config() == svc->config_.experiment.arms[idx].policy)) {
        throw ConfigError("snapshot policy config for arm '" + label +
                          "' differs from the service config");
      }
      svc->arms_[idx]->policy = std::move(state);
      svc->arms_[idx]->counters.restore(a.at("counters"));
    }
    svc->pending_.restore(payload.at("pending"));
    svc->limiter_.restore(payload.at("limiter"));
    svc->pacer_.restore(payload.at("pacer"));
    svc->counters_.restore(payload.at("counters"));
    return svc;
  }

  // Policy states across arms, for equivalence checks in tests.
  std::vector<PolicyState> policy_states() const {
    std::shared_lock state_lock(state_mu_);
    std::vector<PolicyState> out;
    for (const auto& arm : arms_) {
      std::lock_guard<std::mutex> arm_lock(arm->mu);
      out.push_back(arm->policy);
    }
    return out;
  }

  bool state_equals(const Service& other) const {
    const auto a = policy_states();
    const auto b = other.policy_states();
    return a == b && pending_.equals(other.pending_);
  }

  std::size_t pending_size() const { return pending_.size(); }

 private:
  struct ArmRuntime {
    std::string label;
    mutable std::mutex mu;
    PolicyState policy;
    ArmCounters counters;
  };

  nlohmann::json serialize_state() {
    nlohmann::json arms = nlohmann::json::array();
    for (const auto& arm : arms_) {
      nlohmann::json a;
      a["label"] = arm->label;
      a["policy_state"] = arm->policy.to_json();
      a["counters"] = arm->counters.to_json();
      arms.push_back(std::move(a));
    }
    nlohmann::json payload;
    payload["created_at"] = clock_();
    payload["arms"] = std::move(arms);
    payload["pending"] = pending_.to_json();
    payload["limiter"] = limiter_.to_json();
    payload["pacer"] = pacer_.to_json();
    payload["counters"] = counters_.to_json();
    return payload;
  }

  static std::string checksum_hex(const nlohmann::json& payload) {
    const std::string dump = payload.dump();
    const std::uint64_t h = fnv1a64(dump);
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 0; i < 16; ++i) {
      out[15 - i] = hex[(h >> (4 * i)) & 0xF];
    }
    return out;
  }

  ServiceConfig config_;
  Clock clock_;
  mutable std::shared_mutex state_mu_;
  std::vector<std::unique_ptr<ArmRuntime>> arms_;
  RateLimiter limiter_;
  Pacer pacer_;
  bool pacing_active_ = false;
  PendingTable pending_;
  ServiceCounters counters_;
  LatencyHistogram latency_;
};

}  // namespace paybandit
