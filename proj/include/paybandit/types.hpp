#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paybandit/errors.hpp"

namespace paybandit {

using GatewayId = std::string;
using ProcessorId = std::string;

// Maps each card processor to the ordered list of gateways that can settle it.
class RoutingTable {
 public:
  RoutingTable() = default;

  explicit RoutingTable(std::map<ProcessorId, std::vector<GatewayId>> eligible)
      : eligible_(std::move(eligible)) {
    for (auto& [proc, gws] : eligible_) {
      if (gws.empty()) {
        throw ConfigError("processor '" + proc + "' has no eligible gateways");
      }
      for (const auto& g : gws) {
        if (std::find(order_.begin(), order_.end(), g) == order_.end()) {
          order_.push_back(g);
        }
      }
    }
  }

  bool has_processor(const ProcessorId& p) const {
    return eligible_.count(p) != 0;
  }

  const std::vector<GatewayId>& eligible(const ProcessorId& p) const {
    auto it = eligible_.find(p);
    if (it == eligible_.end()) throw UnknownProcessorError(p);
    return it->second;
  }

  // Union of all eligible sets, in first-seen order across processors.
  const std::vector<GatewayId>& gateways() const { return order_; }

  std::size_t max_eligible_size() const {
    std::size_t m = 0;
    for (const auto& [proc, gws] : eligible_) m = std::max(m, gws.size());
    return m;
  }

  const std::map<ProcessorId, std::vector<GatewayId>>& processors() const {
    return eligible_;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [proc, gws] : eligible_) j[proc] = gws;
    return j;
  }

  static RoutingTable from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("routing table must be an object");
    std::map<ProcessorId, std::vector<GatewayId>> m;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!it.value().is_array()) {
        throw ConfigError("eligible gateways for '" + it.key() +
                          "' must be an array");
      }
      std::vector<GatewayId> gws;
      for (const auto& g : it.value()) {
        if (!g.is_string()) {
          throw ConfigError("gateway ids must be strings");
        }
        gws.push_back(g.get<std::string>());
      }
      m[it.key()] = std::move(gws);
    }
    return RoutingTable(std::move(m));
  }

  bool operator==(const RoutingTable&) const = default;

 private:
  std::map<ProcessorId, std::vector<GatewayId>> eligible_;
  std::vector<GatewayId> order_;
};

}  // namespace paybandit
