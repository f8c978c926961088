#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paybandit/errors.hpp"
#include "paybandit/policy.hpp"
#include "paybandit/util.hpp"

namespace paybandit {

struct ExperimentArm {
  std::string label;
  double weight = 0.0;
  PolicyConfig policy;
};

struct ExperimentConfig {
  std::string salt;
  std::vector<ExperimentArm> arms;

  void validate() const {
    if (arms.empty()) throw ConfigError("experiment needs at least one arm");
    std::set<std::string> labels;
    double total = 0.0;
    for (const auto& arm : arms) {
      if (arm.label.empty()) throw ConfigError("arm labels must be non-empty");
      if (!labels.insert(arm.label).second) {
        throw ConfigError("duplicate arm label '" + arm.label + "'");
      }
      if (arm.weight <= 0.0) {
        throw ConfigError("arm '" + arm.label + "' needs a positive weight");
      }
      total += arm.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ConfigError("arm weights must sum to 1");
    }
  }

  // Stable weighted bucket of hash(salt, txn_id); independent of arrival
  // order and identical across restarts with the same salt.
  std::size_t assign_index(const std::string& txn_id) const {
    const double u =
        static_cast<double>(stable_hash(salt, txn_id) >> 11) *
        (1.0 / 9007199254740992.0);
    double cum = 0.0;
    for (std::size_t i = 0; i + 1 < arms.size(); ++i) {
      cum += arms[i].weight;
      if (u < cum) return i;
    }
    return arms.size() - 1;
  }

  const std::string& assign_arm(const std::string& txn_id) const {
    return arms[assign_index(txn_id)].label;
  }

  std::size_t index_of(const std::string& label) const {
    for (std::size_t i = 0; i < arms.size(); ++i) {
      if (arms[i].label == label) return i;
    }
    throw ConfigError("unknown experiment arm '" + label + "'");
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    if (!j.is_object()) throw ConfigError("experiment must be an object");
    if (!j.contains("salt") || !j.at("salt").is_string()) {
      throw ConfigError("experiment requires a string 'salt'");
    }
    c.salt = j.at("salt").get<std::string>();
    if (!j.contains("arms") || !j.at("arms").is_array()) {
      throw ConfigError("experiment requires an 'arms' array");
    }
    for (const auto& a : j.at("arms")) {
      ExperimentArm arm;
      arm.label = a.at("label").get<std::string>();
      arm.weight = a.at("weight").get<double>();
      arm.policy = PolicyConfig::from_json(a.at("policy"));
      c.arms.push_back(std::move(arm));
    }
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json arms_json = nlohmann::json::array();
    for (const auto& arm : arms) {
      nlohmann::json a;
      a["label"] = arm.label;
      a["weight"] = arm.weight;
      a["policy"] = arm.policy.to_json();
      arms_json.push_back(std::move(a));
    }
    nlohmann::json j;
    j["salt"] = salt;
    j["arms"] = std::move(arms_json);
    return j;
  }
};

}  // namespace paybandit
