#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <vector>

#include "paybandit/errors.hpp"
#include "paybandit/trace.hpp"
#include "paybandit/types.hpp"

namespace paybandit {

// Per-step empirical success probabilities recovered from a trace.  For each
// gateway the estimate at step t averages the nearest half_window of its own
// transactions strictly before t and the nearest half_window at or after t,
// truncated at the trace edges.  A gateway that never appears has no curve.
class GroundTruthCurve {
 public:
  GroundTruthCurve(std::size_t steps, std::size_t half_window)
      : steps_(steps), half_window_(half_window) {}

  std::size_t steps() const { return steps_; }
  std::size_t half_window() const { return half_window_; }

  bool defined(const GatewayId& g) const { return values_.count(g) != 0; }

  double value(const GatewayId& g, std::size_t t) const {
    auto it = values_.find(g);
    if (it == values_.end() || t >= it->second.size()) {
      throw UndefinedGroundTruthError(g, t);
    }
    return it->second[t];
  }

  const std::map<GatewayId, std::vector<double>>& values() const {
    return values_;
  }

  void set_curve(const GatewayId& g, std::vector<double> curve) {
    values_[g] = std::move(curve);
  }

 private:
  std::size_t steps_;
  std::size_t half_window_;
  std::map<GatewayId, std::vector<double>> values_;
};

inline GroundTruthCurve estimate_ground_truth(const Trace& trace,
                                              std::size_t half_window = 25) {
  const auto& records = trace.records();
  GroundTruthCurve curve(records.size(), half_window);

  std::map<GatewayId, std::vector<std::size_t>> positions;
  for (std::size_t i = 0; i < records.size(); ++i) {
    positions[records[i].terminal].push_back(i);
  }

  for (const auto& [g, pos] : positions) {
    // prefix[i] = successes among the first i plays of g.
    std::vector<std::size_t> prefix(pos.size() + 1, 0);
    for (std::size_t i = 0; i < pos.size(); ++i) {
      prefix[i + 1] = prefix[i] + std::size_t(records[pos[i]].success);
    }
    std::vector<double> values(records.size());
    for (std::size_t t = 0; t < records.size(); ++t) {
      const auto split =
          std::lower_bound(pos.begin(), pos.end(), t) - pos.begin();
      const std::size_t lo =
          std::size_t(split) > half_window ? std::size_t(split) - half_window
                                           : 0;
      const std::size_t hi =
          std::min(pos.size(), std::size_t(split) + half_window);
      values[t] = static_cast<double>(prefix[hi] - prefix[lo]) /
                  static_cast<double>(hi - lo);
    }
    curve.set_curve(g, std::move(values));
  }
  return curve;
}

}  // namespace paybandit
