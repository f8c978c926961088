#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paybandit/errors.hpp"
#include "paybandit/rng.hpp"
#include "paybandit/stats.hpp"
#include "paybandit/types.hpp"
#include "paybandit/util.hpp"

namespace paybandit {

enum class PolicyKind {
  EpsilonGreedy,
  SwUcb,
  SwBg,
  DUcb,
  DBg,
  DiscountedThompson,
  RuleBased,
};

inline const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::EpsilonGreedy: return "epsilon_greedy";
    case PolicyKind::SwUcb: return "sw_ucb";
    case PolicyKind::SwBg: return "sw_bg";
    case PolicyKind::DUcb: return "d_ucb";
    case PolicyKind::DBg: return "d_bg";
    case PolicyKind::DiscountedThompson: return "d_thompson";
    case PolicyKind::RuleBased: return "rule_based";
  }
  return "unknown";
}

inline PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "epsilon_greedy") return PolicyKind::EpsilonGreedy;
  if (s == "sw_ucb") return PolicyKind::SwUcb;
  if (s == "sw_bg") return PolicyKind::SwBg;
  if (s == "d_ucb") return PolicyKind::DUcb;
  if (s == "d_bg") return PolicyKind::DBg;
  if (s == "d_thompson") return PolicyKind::DiscountedThompson;
  if (s == "rule_based") return PolicyKind::RuleBased;
  throw ConfigError("unknown policy kind '" + s + "'");
}

inline bool uses_window(PolicyKind k) {
  return k == PolicyKind::EpsilonGreedy || k == PolicyKind::SwUcb ||
         k == PolicyKind::SwBg;
}

inline bool uses_alpha(PolicyKind k) {
  return k == PolicyKind::DUcb || k == PolicyKind::DBg ||
         k == PolicyKind::DiscountedThompson;
}

inline bool uses_c1(PolicyKind k) {
  return k == PolicyKind::SwUcb || k == PolicyKind::SwBg ||
         k == PolicyKind::DUcb || k == PolicyKind::DBg;
}

inline bool uses_gumbel(PolicyKind k) {
  return k == PolicyKind::SwBg || k == PolicyKind::DBg;
}

// Hyperparameters must be present exactly when the kind uses them; that keeps
// config files honest about which knobs actually act.
struct PolicyConfig {
  PolicyKind kind = PolicyKind::SwUcb;
  std::optional<std::size_t> window;
  std::optional<double> alpha;
  std::optional<double> c1;
  std::optional<double> epsilon;
  std::optional<double> lambda0;
  std::optional<double> gamma0;
  std::vector<GatewayId> priority;
  std::uint64_t seed = 0;

  void validate(std::size_t max_eligible_size = 0) const {
    require(uses_window(kind), window.has_value(), "window");
    require(uses_alpha(kind), alpha.has_value(), "alpha");
    require(uses_c1(kind), c1.has_value(), "c1");
    require(kind == PolicyKind::EpsilonGreedy, epsilon.has_value(), "epsilon");
    require(kind == PolicyKind::RuleBased, !priority.empty(), "priority");
    if (kind != PolicyKind::DiscountedThompson &&
        (lambda0.has_value() || gamma0.has_value())) {
      throw ConfigError(std::string(to_string(kind)) +
                        " does not take lambda0/gamma0");
    }
    if (window && *window < 1) throw ConfigError("window must be >= 1");
    if (alpha && (*alpha <= 0.0 || *alpha > 1.0)) {
      throw ConfigError("alpha must be in (0,1]");
    }
    if (c1 && *c1 < 0.0) throw ConfigError("c1 must be non-negative");
    if (epsilon) {
      if (*epsilon < 0.0) throw ConfigError("epsilon must be non-negative");
      if (max_eligible_size > 0 &&
          *epsilon > 1.0 / static_cast<double>(max_eligible_size)) {
        throw ConfigError("epsilon exceeds 1/" +
                          std::to_string(max_eligible_size) +
                          " for the largest eligible set");
      }
    }
    if (lambda0 && *lambda0 <= 0.0) throw ConfigError("lambda0 must be > 0");
    if (gamma0 && *gamma0 <= 0.0) throw ConfigError("gamma0 must be > 0");
  }

  double prior_lambda() const { return lambda0.value_or(1.0); }
  double prior_gamma() const { return gamma0.value_or(1.0); }

  // Compact human-readable form used in report tables.
  std::string params_label() const {
    std::string s;
    auto append = [&s](const std::string& part) {
      if (!s.empty()) s += " ";
      s += part;
    };
    if (window) append("W=" + std::to_string(*window));
    if (alpha) append("alpha=" + format_double(*alpha));
    if (c1) append("c1=" + format_double(*c1));
    if (epsilon) append("eps=" + format_double(*epsilon));
    if (lambda0) append("lambda0=" + format_double(*lambda0));
    if (gamma0) append("gamma0=" + format_double(*gamma0));
    if (!priority.empty()) {
      std::string p = "priority=";
      for (std::size_t i = 0; i < priority.size(); ++i) {
        if (i) p += ">";
        p += priority[i];
      }
      append(p);
    }
    return s.empty() ? "-" : s;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["kind"] = to_string(kind);
    if (window) j["window"] = *window;
    if (alpha) j["alpha"] = *alpha;
    if (c1) j["c1"] = *c1;
    if (epsilon) j["epsilon"] = *epsilon;
    if (lambda0) j["lambda0"] = *lambda0;
    if (gamma0) j["gamma0"] = *gamma0;
    if (!priority.empty()) j["priority"] = priority;
    j["seed"] = seed;
    return j;
  }

  static PolicyConfig from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("policy config must be an object");
    static const std::vector<std::string> known = {
        "kind",    "window",  "alpha",  "c1",  "epsilon",
        "lambda0", "gamma0",  "priority", "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
        throw ConfigError("unknown policy config key '" + it.key() + "'");
      }
    }
    if (!j.contains("kind") || !j.at("kind").is_string()) {
      throw ConfigError("policy config requires a string 'kind'");
    }
    PolicyConfig c;
    c.kind = policy_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("window")) {
      const auto& w = j.at("window");
      if (!w.is_number_unsigned() || w.get<std::uint64_t>() == 0) {
        throw ConfigError("window must be a positive integer");
      }
      c.window = w.get<std::size_t>();
    }
    if (j.contains("alpha")) c.alpha = number_field(j, "alpha");
    if (j.contains("c1")) c.c1 = number_field(j, "c1");
    if (j.contains("epsilon")) c.epsilon = number_field(j, "epsilon");
    if (j.contains("lambda0")) c.lambda0 = number_field(j, "lambda0");
    if (j.contains("gamma0")) c.gamma0 = number_field(j, "gamma0");
    if (j.contains("priority")) {
      if (!j.at("priority").is_array()) {
        throw ConfigError("priority must be an array of gateway ids");
      }
      for (const auto& g : j.at("priority")) {
        if (!g.is_string()) throw ConfigError("priority entries must be strings");
        c.priority.push_back(g.get<std::string>());
      }
    }
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_integer() &&
          !j.at("seed").is_number_unsigned()) {
        throw ConfigError("seed must be an integer");
      }
      c.seed = j.at("seed").get<std::uint64_t>();
    }
    c.validate();
    return c;
  }

  bool operator==(const PolicyConfig&) const = default;

 private:
  static void require(bool needed, bool present, const char* name) {
    if (needed && !present) {
      throw ConfigError(std::string("missing required parameter '") + name +
                        "'");
    }
    if (!needed && present) {
      throw ConfigError(std::string("parameter '") + name +
                        "' is not used by this kind");
    }
  }

  static double number_field(const nlohmann::json& j, const char* name) {
    if (!j.at(name).is_number()) {
      throw ConfigError(std::string(name) + " must be a number");
    }
    return j.at(name).get<double>();
  }
};

// Full decision state for one policy: per-gateway estimators, the seeded
// stream, and the global step counter.  Everything here round-trips through
// to_json/from_json bit-exactly, which is what snapshot restore relies on.
class PolicyState {
 public:
  struct Arm {
    SlidingWindowStats window;
    DiscountedStats discounted;
    BetaParams beta;
    std::uint64_t plays = 0;
    bool operator==(const Arm&) const = default;
  };

  PolicyState() = default;

  PolicyState(PolicyConfig config, const std::vector<GatewayId>& gateways)
      : config_(std::move(config)), rng_(config_.seed) {
    config_.validate();
    for (const auto& g : gateways) {
      Arm arm;
      if (config_.kind == PolicyKind::DiscountedThompson) {
        arm.beta = BetaParams{config_.prior_lambda(), config_.prior_gamma()};
      }
      arms_.emplace(g, std::move(arm));
    }
  }

  const PolicyConfig& config() const { return config_; }
  std::uint64_t step() const { return step_; }
  const std::map<GatewayId, Arm>& arms() const { return arms_; }

  const Arm& arm(const GatewayId& g) const {
    auto it = arms_.find(g);
    if (it == arms_.end()) throw UnknownGatewayError(g);
    return it->second;
  }

  GatewayId select(const std::vector<GatewayId>& eligible) {
    if (eligible.empty()) throw EmptyEligibleSetError();
    for (const auto& g : eligible) arm(g);
    if (eligible.size() == 1) return eligible.front();

    if (config_.kind == PolicyKind::RuleBased) return select_rule(eligible);

    // Unplayed arms go first: their exploration bonus is formally infinite.
    std::vector<std::size_t> cold;
    for (std::size_t i = 0; i < eligible.size(); ++i) {
      if (is_cold(arms_.at(eligible[i]))) cold.push_back(i);
    }
    if (!cold.empty()) {
      const std::size_t pick =
          cold.size() == 1 ? cold.front() : cold[rng_.uniform_index(cold.size())];
      return eligible[pick];
    }

    if (config_.kind == PolicyKind::EpsilonGreedy) {
      return select_epsilon(eligible);
    }
    return select_scored(eligible);
  }

  void update(const GatewayId& gateway, int reward) {
    auto it = arms_.find(gateway);
    if (it == arms_.end()) throw UnknownGatewayError(gateway);
    switch (config_.kind) {
      case PolicyKind::EpsilonGreedy:
      case PolicyKind::SwUcb:
      case PolicyKind::SwBg:
        it->second.window.push(reward, *config_.window);
        break;
      case PolicyKind::DUcb:
      case PolicyKind::DBg:
        decay_all();
        it->second.discounted.add(reward);
        break;
      case PolicyKind::DiscountedThompson:
        it->second.beta.observe(reward, *config_.alpha);
        break;
      case PolicyKind::RuleBased:
        break;
    }
    ++it->second.plays;
    ++step_;
  }

  // One global decay tick; every gateway's discounted mass shrinks by alpha.
  void decay_all() {
    if (config_.kind != PolicyKind::DUcb && config_.kind != PolicyKind::DBg) {
      throw ConfigError("decay_all requires a discounted UCB/BG kind");
    }
    for (auto& [g, arm] : arms_) arm.discounted.decay(*config_.alpha);
  }

  nlohmann::json to_json() const {
    nlohmann::json arms = nlohmann::json::object();
    for (const auto& [g, arm] : arms_) {
      nlohmann::json a;
      a["plays"] = arm.plays;
      if (uses_window(config_.kind)) {
        nlohmann::json outcomes = nlohmann::json::array();
        for (auto r : arm.window.rewards()) outcomes.push_back(int(r));
        a["outcomes"] = std::move(outcomes);
      } else if (config_.kind == PolicyKind::DUcb ||
                 config_.kind == PolicyKind::DBg) {
        a["weighted_count"] = arm.discounted.weighted_count();
        a["weighted_successes"] = arm.discounted.weighted_reward();
      } else if (config_.kind == PolicyKind::DiscountedThompson) {
        a["lambda"] = arm.beta.lambda;
        a["gamma"] = arm.beta.gamma;
      }
      arms[g] = std::move(a);
    }
    nlohmann::json j;
    j["config"] = config_.to_json();
    j["step"] = step_;
    j["rng"] = rng_.save();
    j["arms"] = std::move(arms);
    return j;
  }

  static PolicyState from_json(const nlohmann::json& j) {
    for (const char* key : {"config", "step", "rng", "arms"}) {
      if (!j.contains(key)) {
        throw CorruptSnapshotError(std::string("policy state missing '") + key +
                                   "'");
      }
    }
    PolicyState s;
    s.config_ = PolicyConfig::from_json(j.at("config"));
    s.step_ = j.at("step").get<std::uint64_t>();
    s.rng_.load(j.at("rng").get<std::string>());
    if (!j.at("arms").is_object()) {
      throw CorruptSnapshotError("arms must be an object");
    }
    for (auto it = j.at("arms").begin(); it != j.at("arms").end(); ++it) {
      Arm arm;
      const auto& a = it.value();
      arm.plays = a.at("plays").get<std::uint64_t>();
      if (uses_window(s.config_.kind)) {
        for (const auto& r : a.at("outcomes")) {
          const int v = r.get<int>();
          if (v != 0 && v != 1) {
            throw CorruptSnapshotError("outcomes must be 0/1");
          }
          arm.window.push(v, *s.config_.window);
        }
      } else if (s.config_.kind == PolicyKind::DUcb ||
                 s.config_.kind == PolicyKind::DBg) {
        const double wc = a.at("weighted_count").get<double>();
        const double wr = a.at("weighted_successes").get<double>();
        if (wc < 0.0 || wr < 0.0 || wr > wc + 1e-9) {
          throw CorruptSnapshotError("discounted stats out of range");
        }
        arm.discounted = DiscountedStats(wc, wr);
      } else if (s.config_.kind == PolicyKind::DiscountedThompson) {
        arm.beta.lambda = a.at("lambda").get<double>();
        arm.beta.gamma = a.at("gamma").get<double>();
        if (arm.beta.lambda <= 0.0 || arm.beta.gamma <= 0.0) {
          throw CorruptSnapshotError("beta params must stay positive");
        }
      }
      s.arms_.emplace(it.key(), std::move(arm));
    }
    return s;
  }

  bool operator==(const PolicyState&) const = default;

 private:
  bool is_cold(const Arm& arm) const {
    switch (config_.kind) {
      case PolicyKind::EpsilonGreedy:
      case PolicyKind::SwUcb:
      case PolicyKind::SwBg:
        return arm.window.estimate().count == 0;
      case PolicyKind::DUcb:
      case PolicyKind::DBg:
        return arm.discounted.weighted_count() <= 0.0;
      case PolicyKind::DiscountedThompson:
        return arm.plays == 0;
      case PolicyKind::RuleBased:
        return false;
    }
    return false;
  }

  GatewayId select_rule(const std::vector<GatewayId>& eligible) const {
    for (const auto& g : config_.priority) {
      if (std::find(eligible.begin(), eligible.end(), g) != eligible.end()) {
        return g;
      }
    }
    throw ConfigError("priority list covers none of the eligible gateways");
  }

  GatewayId select_epsilon(const std::vector<GatewayId>& eligible) {
    std::size_t best = argmax_index(eligible, [this](const Arm& a) {
      return a.window.estimate().rate;
    });
    const double eps = *config_.epsilon;
    const std::size_t k = eligible.size();
    const double u = rng_.uniform01();
    if (u < static_cast<double>(k - 1) * eps) {
      // u identifies which non-argmax arm fires; each has mass exactly eps.
      std::size_t j = std::min(static_cast<std::size_t>(u / eps), k - 2);
      for (std::size_t i = 0; i < k; ++i) {
        if (i == best) continue;
        if (j == 0) return eligible[i];
        --j;
      }
    }
    return eligible[best];
  }

  GatewayId select_scored(const std::vector<GatewayId>& eligible) {
    std::vector<double> scores(eligible.size());
    for (std::size_t i = 0; i < eligible.size(); ++i) {
      scores[i] = score(arms_.at(eligible[i]));
    }
    std::size_t best = argmax_of(scores);
    return eligible[best];
  }

  double score(const Arm& arm) {
    switch (config_.kind) {
      case PolicyKind::SwUcb:
      case PolicyKind::SwBg: {
        const auto e = arm.window.estimate();
        const double bonus =
            *config_.c1 * std::sqrt(1.0 / static_cast<double>(e.count));
        return e.rate + (uses_gumbel(config_.kind) ? bonus * rng_.gumbel()
                                                   : bonus);
      }
      case PolicyKind::DUcb:
      case PolicyKind::DBg: {
        const double bonus =
            *config_.c1 * std::sqrt(1.0 / arm.discounted.weighted_count());
        return arm.discounted.mean() +
               (uses_gumbel(config_.kind) ? bonus * rng_.gumbel() : bonus);
      }
      case PolicyKind::DiscountedThompson:
        return rng_.beta(arm.beta.lambda, arm.beta.gamma);
      default:
        throw ConfigError("kind has no score formula");
    }
  }

  template <typename F>
  std::size_t argmax_index(const std::vector<GatewayId>& eligible, F&& value) {
    std::vector<double> v(eligible.size());
    for (std::size_t i = 0; i < eligible.size(); ++i) {
      v[i] = value(arms_.at(eligible[i]));
    }
    return argmax_of(v);
  }

  std::size_t argmax_of(const std::vector<double>& v) {
    double best = -std::numeric_limits<double>::infinity();
    for (double x : v) best = std::max(best, x);
    std::vector<std::size_t> top;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == best) top.push_back(i);
    }
    if (top.size() == 1) return top.front();
    return top[rng_.uniform_index(top.size())];
  }

  PolicyConfig config_;
  std::map<GatewayId, Arm> arms_;
  Rng rng_;
  std::uint64_t step_ = 0;
};

}  // namespace paybandit
