#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paybandit/env.hpp"
#include "paybandit/errors.hpp"
#include "paybandit/policy.hpp"
#include "paybandit/rng.hpp"
#include "paybandit/util.hpp"

namespace paybandit {

struct RegretCurve {
  std::string policy;
  PolicyConfig config;
  std::uint64_t seed = 0;
  std::vector<double> cumulative;
  std::vector<GatewayId> decisions;

  double final_regret() const {
    return cumulative.empty() ? 0.0 : cumulative.back();
  }
};

// The caller's seed drives two independent streams: the policy's own
// randomness and the environment's reward sampling.
inline std::uint64_t derive_policy_seed(std::uint64_t seed) {
  return splitmix64(seed ^ 0x706f6c696379ULL);
}

inline std::uint64_t derive_env_seed(std::uint64_t seed) {
  return splitmix64(seed ^ 0x656e76ULL);
}

inline RegretCurve replay(const ReplayEnv& env, PolicyConfig config,
                          std::uint64_t seed,
                          const std::string& label = std::string()) {
  config.seed = derive_policy_seed(seed);
  PolicyState policy(config, env.gateways());
  Rng rewards(derive_env_seed(seed));

  RegretCurve curve;
  curve.policy = label.empty() ? to_string(config.kind) : label;
  curve.config = config;
  curve.seed = seed;
  curve.cumulative.reserve(env.steps());
  curve.decisions.reserve(env.steps());

  double cum = 0.0;
  for (std::size_t t = 0; t < env.steps(); ++t) {
    const auto& eligible = env.eligible(t);
    const GatewayId chosen = policy.select(eligible);
    const double x = env.truth(chosen, t);
    policy.update(chosen, rewards.bernoulli(x));
    double best = 0.0;
    for (const auto& g : eligible) best = std::max(best, env.truth(g, t));
    cum += best - x;
    curve.cumulative.push_back(cum);
    curve.decisions.push_back(chosen);
  }
  return curve;
}

inline constexpr const char* kRegretHeader = "step,policy,cumulative_regret";

inline std::string format_regret_csv(const std::vector<RegretCurve>& curves) {
  if (curves.empty()) throw Error("no regret curves to emit");
  std::string out = kRegretHeader;
  out += "\n";
  for (const auto& c : curves) {
    for (std::size_t t = 0; t < c.cumulative.size(); ++t) {
      out += std::to_string(t);
      out += ",";
      out += c.policy;
      out += ",";
      out += format_double(c.cumulative[t]);
      out += "\n";
    }
  }
  return out;
}

inline nlohmann::json summarize_curves(const std::vector<RegretCurve>& curves) {
  if (curves.empty()) throw Error("no regret curves to summarize");
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : curves) {
    nlohmann::json j;
    j["policy"] = c.policy;
    j["config"] = c.config.to_json();
    j["seed"] = c.seed;
    j["final_regret"] = c.final_regret();
    j["steps"] = c.cumulative.size();
    arr.push_back(std::move(j));
  }
  return arr;
}

// Writes regret.csv and summary.json under out_dir.
inline void emit_regret(const std::vector<RegretCurve>& curves,
                        const std::string& out_dir) {
  const std::string csv = format_regret_csv(curves);
  const std::string json = summarize_curves(curves).dump(2) + "\n";
  write_file_atomic(out_dir + "/regret.csv", csv);
  write_file_atomic(out_dir + "/summary.json", json);
}

}  // namespace paybandit
