#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paybandit/errors.hpp"
#include "paybandit/trace.hpp"
#include "paybandit/util.hpp"

namespace paybandit {

// One aggregated outcome bucket: how arm `arm` fared on day `day`.
struct OutcomeRow {
  std::string day;
  std::string arm;
  std::uint64_t attempts = 0;
  std::uint64_t successes = 0;
};

inline constexpr const char* kOutcomesHeader = "day,arm,attempts,successes";
inline constexpr const char* kUpliftHeader =
    "day,arm,attempts,successes,success_rate,uplift_pp";

inline std::vector<OutcomeRow> parse_outcomes_csv(const std::string& content) {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line) || detail::strip_cr(line) != kOutcomesHeader) {
    throw MalformedRowError(1, std::string("expected header '") +
                                   kOutcomesHeader + "'");
  }
  std::vector<OutcomeRow> rows;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 4) {
      throw MalformedRowError(row, "expected 4 fields");
    }
    OutcomeRow r;
    r.day = fields[0];
    r.arm = fields[1];
    try {
      r.attempts = std::stoull(fields[2]);
      r.successes = std::stoull(fields[3]);
    } catch (const std::exception&) {
      throw MalformedRowError(row, "counts must be non-negative integers");
    }
    if (r.successes > r.attempts) {
      throw MalformedRowError(row, "successes exceed attempts");
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw EmptyTraceError();
  return rows;
}

// Per-day success rates and uplift against the baseline arm, in percentage
// points, plus a trailing cumulative block over all days.  Baseline rows and
// days where the baseline has no traffic leave the uplift field empty.
inline std::string format_uplift_csv(const std::vector<OutcomeRow>& rows,
                                     const std::string& baseline) {
  std::vector<std::string> days;
  std::vector<std::string> arms;
  std::map<std::pair<std::string, std::string>, OutcomeRow> cell;
  std::map<std::string, OutcomeRow> totals;
  for (const auto& r : rows) {
    if (std::find(days.begin(), days.end(), r.day) == days.end()) {
      days.push_back(r.day);
    }
    if (std::find(arms.begin(), arms.end(), r.arm) == arms.end()) {
      arms.push_back(r.arm);
    }
    auto& c = cell[{r.day, r.arm}];
    c.attempts += r.attempts;
    c.successes += r.successes;
    auto& t = totals[r.arm];
    t.attempts += r.attempts;
    t.successes += r.successes;
  }

  auto rate_of = [](const OutcomeRow& r) -> std::optional<double> {
    if (r.attempts == 0) return std::nullopt;
    return static_cast<double>(r.successes) / static_cast<double>(r.attempts);
  };

  std::string out = kUpliftHeader;
  out += "\n";
  auto emit = [&](const std::string& day, const std::string& arm,
                  const OutcomeRow& r, std::optional<double> baseline_rate) {
    const auto rate = rate_of(r);
    out += day;
    out += ",";
    out += arm;
    out += ",";
    out += std::to_string(r.attempts);
    out += ",";
    out += std::to_string(r.successes);
    out += ",";
    if (rate) out += format_double(*rate);
    out += ",";
    if (rate && baseline_rate && arm != baseline) {
      out += format_double((*rate - *baseline_rate) * 100.0);
    }
    out += "\n";
  };

  for (const auto& day : days) {
    std::optional<double> baseline_rate;
    auto bit = cell.find({day, baseline});
    if (bit != cell.end()) baseline_rate = rate_of(bit->second);
    for (const auto& arm : arms) {
      auto it = cell.find({day, arm});
      if (it == cell.end()) continue;
      emit(day, arm, it->second, baseline_rate);
    }
  }
  std::optional<double> baseline_total_rate;
  auto bt = totals.find(baseline);
  if (bt != totals.end()) baseline_total_rate = rate_of(bt->second);
  for (const auto& arm : arms) {
    emit("cumulative", arm, totals.at(arm), baseline_total_rate);
  }
  return out;
}

// Cumulative uplift of `arm` over `baseline` in percentage points.
inline std::optional<double> cumulative_uplift_pp(
    const std::vector<OutcomeRow>& rows, const std::string& baseline,
    const std::string& arm) {
  OutcomeRow base, cand;
  for (const auto& r : rows) {
    if (r.arm == baseline) {
      base.attempts += r.attempts;
      base.successes += r.successes;
    } else if (r.arm == arm) {
      cand.attempts += r.attempts;
      cand.successes += r.successes;
    }
  }
  if (base.attempts == 0 || cand.attempts == 0) return std::nullopt;
  const double rb =
      static_cast<double>(base.successes) / static_cast<double>(base.attempts);
  const double rc =
      static_cast<double>(cand.successes) / static_cast<double>(cand.attempts);
  return (rc - rb) * 100.0;
}

// Picks the baseline arm: the requested label if it has traffic, otherwise
// the first arm in file order.
inline std::string resolve_baseline(const std::vector<OutcomeRow>& rows,
                                    const std::string& requested) {
  for (const auto& r : rows) {
    if (r.arm == requested) return requested;
  }
  return rows.front().arm;
}

// Condenses a regret CSV (step,policy,cumulative_regret) into one row per
// policy with its step count and final regret.
inline std::string summarize_regret_csv(const std::string& content) {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line) ||
      detail::strip_cr(line) != "step,policy,cumulative_regret") {
    throw MalformedRowError(1, "expected header 'step,policy,cumulative_regret'");
  }
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::uint64_t, double>> last;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 3) throw MalformedRowError(row, "expected 3 fields");
    const auto& policy = fields[1];
    if (last.find(policy) == last.end()) order.push_back(policy);
    try {
      last[policy] = {std::stoull(fields[0]) + 1, parse_double(fields[2])};
    } catch (const std::exception&) {
      throw MalformedRowError(row, "unparseable step or regret");
    }
  }
  if (order.empty()) throw EmptyTraceError();
  std::string out = "policy,steps,final_regret\n";
  for (const auto& policy : order) {
    out += policy;
    out += ",";
    out += std::to_string(last[policy].first);
    out += ",";
    out += format_double(last[policy].second);
    out += "\n";
  }
  return out;
}

// Flattens a saved /metrics document into one row per arm.
inline std::string summarize_metrics_json(const nlohmann::json& doc,
                                          const std::string& baseline) {
  if (!doc.is_object() || !doc.contains("arms")) {
    throw Error("metrics document has no 'arms'");
  }
  std::vector<OutcomeRow> rows;
  for (auto it = doc.at("arms").begin(); it != doc.at("arms").end(); ++it) {
    OutcomeRow r;
    r.day = "cumulative";
    r.arm = it.key();
    r.attempts = it.value().at("rewarded").get<std::uint64_t>();
    r.successes = it.value().at("successes").get<std::uint64_t>();
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw Error("metrics document has no arms");
  std::string base = baseline;
  if (doc.contains("baseline_arm") && doc.at("baseline_arm").is_string() &&
      baseline.empty()) {
    base = doc.at("baseline_arm").get<std::string>();
  }
  std::string out = "arm,attempts,successes,success_rate,uplift_pp\n";
  std::optional<double> base_rate;
  for (const auto& r : rows) {
    if (r.arm == base && r.attempts > 0) {
      base_rate = static_cast<double>(r.successes) /
                  static_cast<double>(r.attempts);
    }
  }
  for (const auto& r : rows) {
    out += r.arm;
    out += ",";
    out += std::to_string(r.attempts);
    out += ",";
    out += std::to_string(r.successes);
    out += ",";
    std::optional<double> rate;
    if (r.attempts > 0) {
      rate = static_cast<double>(r.successes) / static_cast<double>(r.attempts);
      out += format_double(*rate);
    }
    out += ",";
    if (rate && base_rate && r.arm != base) {
      out += format_double((*rate - *base_rate) * 100.0);
    }
    out += "\n";
  }
  return out;
}

}  // namespace paybandit
