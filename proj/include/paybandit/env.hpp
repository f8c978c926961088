#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paybandit/errors.hpp"
#include "paybandit/ground_truth.hpp"
#include "paybandit/trace.hpp"
#include "paybandit/types.hpp"

namespace paybandit {

// Abstract world a policy is replayed against: a horizon, per-step eligible
// sets, and the true success probability of every gateway at every step.
class ReplayEnv {
 public:
  virtual ~ReplayEnv() = default;
  virtual std::size_t steps() const = 0;
  virtual const std::vector<GatewayId>& gateways() const = 0;
  virtual const std::vector<GatewayId>& eligible(std::size_t t) const = 0;
  virtual double truth(const GatewayId& g, std::size_t t) const = 0;
};

// One schedule segment: constant at `value` from `step`, or, when `drift_to`
// is set, linear from `value` to `drift_to` across the segment.
struct Breakpoint {
  std::size_t step = 0;
  double value = 0.0;
  std::optional<double> drift_to;

  bool operator==(const Breakpoint&) const = default;
};

struct SyntheticEnvSpec {
  std::size_t steps = 0;
  RoutingTable table;
  std::map<GatewayId, std::vector<Breakpoint>> schedules;

  void validate() const {
    if (steps == 0) throw InvalidBreakpointsError("steps must be positive");
    for (const auto& g : table.gateways()) {
      if (schedules.find(g) == schedules.end()) {
        throw InvalidBreakpointsError("gateway '" + g + "' has no schedule");
      }
    }
    for (const auto& [g, bps] : schedules) {
      if (bps.empty()) {
        throw InvalidBreakpointsError("gateway '" + g + "' has no breakpoints");
      }
      if (bps.front().step != 0) {
        throw InvalidBreakpointsError("schedule for '" + g +
                                      "' must start at step 0");
      }
      for (std::size_t i = 0; i < bps.size(); ++i) {
        if (i > 0 && bps[i].step <= bps[i - 1].step) {
          throw InvalidBreakpointsError(
              "breakpoints must be strictly increasing");
        }
        if (bps[i].value < 0.0 || bps[i].value > 1.0) {
          throw InvalidBreakpointsError("probabilities must be in [0,1]");
        }
        if (bps[i].drift_to) {
          if (*bps[i].drift_to < 0.0 || *bps[i].drift_to > 1.0) {
            throw InvalidBreakpointsError("probabilities must be in [0,1]");
          }
          if (i + 1 == bps.size()) {
            throw InvalidBreakpointsError(
                "drift segment needs a following breakpoint");
          }
        }
      }
    }
  }

  static SyntheticEnvSpec from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("env must be an object");
    SyntheticEnvSpec spec;
    if (!j.contains("steps")) throw ConfigError("env requires 'steps'");
    spec.steps = j.at("steps").get<std::size_t>();
    if (!j.contains("routing")) throw ConfigError("env requires 'routing'");
    spec.table = RoutingTable::from_json(j.at("routing"));
    if (!j.contains("schedules")) throw ConfigError("env requires 'schedules'");
    for (auto it = j.at("schedules").begin(); it != j.at("schedules").end();
         ++it) {
      std::vector<Breakpoint> bps;
      for (const auto& b : it.value()) {
        Breakpoint bp;
        bp.step = b.at("step").get<std::size_t>();
        bp.value = b.at("value").get<double>();
        if (b.contains("drift_to")) bp.drift_to = b.at("drift_to").get<double>();
        bps.push_back(bp);
      }
      spec.schedules[it.key()] = std::move(bps);
    }
    spec.validate();
    return spec;
  }
};

// Deterministic x_{t,g} lookup realized from a schedule spec.  Eligible sets
// cycle round-robin over the table's processors, which for the common
// single-processor layout is simply a constant set.
class SyntheticEnv : public ReplayEnv {
 public:
  explicit SyntheticEnv(SyntheticEnvSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    for (const auto& [proc, gws] : spec_.table.processors()) {
      eligible_.push_back(gws);
    }
  }

  std::size_t steps() const override { return spec_.steps; }

  const std::vector<GatewayId>& gateways() const override {
    return spec_.table.gateways();
  }

  const std::vector<GatewayId>& eligible(std::size_t t) const override {
    return eligible_[t % eligible_.size()];
  }

  double truth(const GatewayId& g, std::size_t t) const override {
    auto it = spec_.schedules.find(g);
    if (it == spec_.schedules.end()) throw UndefinedGroundTruthError(g, t);
    const auto& bps = it->second;
    auto seg = std::upper_bound(
        bps.begin(), bps.end(), t,
        [](std::size_t step, const Breakpoint& b) { return step < b.step; });
    --seg;
    if (!seg->drift_to) return seg->value;
    const auto next = seg + 1;
    const double span = static_cast<double>(next->step - seg->step);
    const double frac = static_cast<double>(t - seg->step) / span;
    return seg->value + (*seg->drift_to - seg->value) * frac;
  }

  const SyntheticEnvSpec& spec() const { return spec_; }

 private:
  SyntheticEnvSpec spec_;
  std::vector<std::vector<GatewayId>> eligible_;
};

inline std::unique_ptr<SyntheticEnv> make_synthetic_env(SyntheticEnvSpec spec) {
  return std::make_unique<SyntheticEnv>(std::move(spec));
}

// Trace-backed environment: truth comes from the centered-window estimator,
// and eligible sets are the record's processor's gateways minus any gateway
// the estimator has no curve for.  Records left with an empty eligible set
// cannot be replayed and are dropped (counted in dropped()).
class TraceEnv : public ReplayEnv {
 public:
  TraceEnv(const Trace& trace, std::size_t half_window = 25)
      : truth_(estimate_ground_truth(trace, half_window)) {
    std::map<ProcessorId, std::size_t> pool_index;
    for (const auto& [proc, gws] : trace.table().processors()) {
      std::vector<GatewayId> kept;
      for (const auto& g : gws) {
        if (truth_.defined(g)) kept.push_back(g);
      }
      pool_index[proc] = pools_.size();
      pools_.push_back(std::move(kept));
    }
    for (const auto& g : trace.table().gateways()) {
      if (truth_.defined(g)) gateways_.push_back(g);
    }
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const std::size_t p = pool_index.at(trace.processor_of(i));
      if (pools_[p].empty()) {
        ++dropped_;
        continue;
      }
      steps_.push_back(i);
      eligible_idx_.push_back(p);
    }
    if (steps_.empty()) throw EmptyTraceError();
  }

  std::size_t steps() const override { return steps_.size(); }
  const std::vector<GatewayId>& gateways() const override { return gateways_; }

  const std::vector<GatewayId>& eligible(std::size_t t) const override {
    return pools_[eligible_idx_[t]];
  }

  double truth(const GatewayId& g, std::size_t t) const override {
    return truth_.value(g, steps_[t]);
  }

  std::size_t dropped() const { return dropped_; }
  const GroundTruthCurve& curve() const { return truth_; }

 private:
  GroundTruthCurve truth_;
  std::vector<GatewayId> gateways_;
  std::vector<std::vector<GatewayId>> pools_;
  std::vector<std::size_t> steps_;
  std::vector<std::size_t> eligible_idx_;
  std::size_t dropped_ = 0;
};

}  // namespace paybandit
