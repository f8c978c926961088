#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "paybandit/env.hpp"
#include "paybandit/errors.hpp"
#include "paybandit/policy.hpp"
#include "paybandit/replay.hpp"
#include "paybandit/util.hpp"

namespace paybandit {

struct Grid {
  std::vector<std::size_t> window = {50, 100, 200, 500, 1000};
  std::vector<double> alpha = {0.5, 0.6, 0.8, 0.9, 0.99};
  std::vector<double> c1 = {0.1, 0.5, 1.0, 2.0};
  std::vector<double> epsilon = {0.05, 0.1, 0.2};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};

  static Grid from_json(const nlohmann::json& j) {
    Grid g;
    if (j.contains("window")) {
      g.window = j.at("window").get<std::vector<std::size_t>>();
    }
    if (j.contains("alpha")) {
      g.alpha = j.at("alpha").get<std::vector<double>>();
    }
    if (j.contains("c1")) g.c1 = j.at("c1").get<std::vector<double>>();
    if (j.contains("epsilon")) {
      g.epsilon = j.at("epsilon").get<std::vector<double>>();
    }
    if (j.contains("seeds")) {
      g.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    }
    return g;
  }
};

struct TuneRow {
  PolicyConfig config;
  std::string params;
  double mean_final_regret = 0.0;
  double stderr_of_mean = 0.0;
  std::size_t seeds_used = 0;
  bool failed = false;
  std::string error;
};

struct TuneReport {
  std::vector<TuneRow> rows;
  std::map<PolicyKind, PolicyConfig> best;
};

inline std::vector<PolicyConfig> grid_cells(PolicyKind kind, const Grid& grid) {
  std::vector<PolicyConfig> cells;
  auto base = [kind]() {
    PolicyConfig c;
    c.kind = kind;
    return c;
  };
  switch (kind) {
    case PolicyKind::EpsilonGreedy:
      for (auto w : grid.window) {
        for (auto e : grid.epsilon) {
          auto c = base();
          c.window = w;
          c.epsilon = e;
          cells.push_back(c);
        }
      }
      break;
    case PolicyKind::SwUcb:
    case PolicyKind::SwBg:
      for (auto w : grid.window) {
        for (auto x : grid.c1) {
          auto c = base();
          c.window = w;
          c.c1 = x;
          cells.push_back(c);
        }
      }
      break;
    case PolicyKind::DUcb:
    case PolicyKind::DBg:
      for (auto a : grid.alpha) {
        for (auto x : grid.c1) {
          auto c = base();
          c.alpha = a;
          c.c1 = x;
          cells.push_back(c);
        }
      }
      break;
    case PolicyKind::DiscountedThompson:
      for (auto a : grid.alpha) {
        auto c = base();
        c.alpha = a;
        cells.push_back(c);
      }
      break;
    case PolicyKind::RuleBased:
      throw ConfigError("the rule-based baseline is not tunable");
  }
  if (cells.empty()) throw ConfigError("grid produced no cells");
  return cells;
}

namespace detail {

// Ties go toward smaller W and larger alpha: configurations that forget less.
inline bool tune_row_less(const TuneRow& a, const TuneRow& b) {
  if (a.failed != b.failed) return b.failed;
  if (!a.failed && a.mean_final_regret != b.mean_final_regret) {
    return a.mean_final_regret < b.mean_final_regret;
  }
  const auto& ca = a.config;
  const auto& cb = b.config;
  if (ca.kind != cb.kind) return ca.kind < cb.kind;
  const std::size_t wa = ca.window.value_or(0), wb = cb.window.value_or(0);
  if (wa != wb) return wa < wb;
  const double aa = ca.alpha.value_or(0.0), ab = cb.alpha.value_or(0.0);
  if (aa != ab) return aa > ab;
  const double c1a = ca.c1.value_or(0.0), c1b = cb.c1.value_or(0.0);
  if (c1a != c1b) return c1a < c1b;
  const double ea = ca.epsilon.value_or(0.0), eb = cb.epsilon.value_or(0.0);
  if (ea != eb) return ea < eb;
  return a.params < b.params;
}

template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& body) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      body(i);
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(workers, count); ++w) {
    pool.emplace_back(run);
  }
  run();
  for (auto& t : pool) t.join();
}

}  // namespace detail

inline TuneReport grid_search(const ReplayEnv& env, const Grid& grid,
                              const std::vector<PolicyKind>& kinds,
                              std::size_t parallelism = 1) {
  if (kinds.empty()) throw ConfigError("no policy kinds to tune");
  if (grid.seeds.empty()) throw ConfigError("grid needs at least one seed");

  std::vector<PolicyConfig> cells;
  for (auto kind : kinds) {
    auto ks = grid_cells(kind, grid);
    cells.insert(cells.end(), ks.begin(), ks.end());
  }

  std::size_t max_eligible = 0;
  for (std::size_t t = 0; t < env.steps(); ++t) {
    max_eligible = std::max(max_eligible, env.eligible(t).size());
  }

  std::vector<TuneRow> rows(cells.size());
  detail::parallel_for(cells.size(), parallelism, [&](std::size_t i) {
    TuneRow row;
    row.config = cells[i];
    row.params = cells[i].params_label();
    try {
      cells[i].validate(max_eligible);
      std::vector<double> finals;
      finals.reserve(grid.seeds.size());
      for (auto seed : grid.seeds) {
        finals.push_back(replay(env, cells[i], seed).final_regret());
      }
      double sum = 0.0;
      for (double x : finals) sum += x;
      const double mean = sum / static_cast<double>(finals.size());
      double ss = 0.0;
      for (double x : finals) ss += (x - mean) * (x - mean);
      row.mean_final_regret = mean;
      row.stderr_of_mean =
          finals.size() > 1
              ? std::sqrt(ss / static_cast<double>(finals.size() - 1)) /
                    std::sqrt(static_cast<double>(finals.size()))
              : 0.0;
      row.seeds_used = finals.size();
    } catch (const Error& e) {
      row.failed = true;
      row.error = e.what();
    }
    rows[i] = std::move(row);
  });

  std::sort(rows.begin(), rows.end(), detail::tune_row_less);

  TuneReport report;
  report.rows = std::move(rows);
  for (const auto& row : report.rows) {
    if (!row.failed && report.best.find(row.config.kind) == report.best.end()) {
      report.best.emplace(row.config.kind, row.config);
    }
  }
  return report;
}

inline constexpr const char* kTuneHeader =
    "kind,params,mean_final_regret,stderr,seeds";

inline std::string format_tune_csv(const TuneReport& report) {
  if (report.rows.empty()) throw Error("empty tune report");
  std::string out = kTuneHeader;
  out += "\n";
  for (const auto& row : report.rows) {
    out += to_string(row.config.kind);
    out += ",";
    out += row.params;
    out += ",";
    if (!row.failed) {
      out += format_double(row.mean_final_regret);
      out += ",";
      out += format_double(row.stderr_of_mean);
    } else {
      out += ",";
    }
    out += ",";
    out += std::to_string(row.seeds_used);
    out += "\n";
  }
  return out;
}

inline nlohmann::json best_configs_json(const TuneReport& report) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [kind, config] : report.best) {
    auto c = config;
    c.seed = 0;
    j[to_string(kind)] = c.to_json();
  }
  return j;
}

// Writes report.csv and best.json under out_dir.
inline void emit_report(const TuneReport& report, const std::string& out_dir) {
  if (report.rows.empty()) throw Error("empty tune report");
  write_file_atomic(out_dir + "/report.csv", format_tune_csv(report));
  write_file_atomic(out_dir + "/best.json",
                    best_configs_json(report).dump(2) + "\n");
}

}  // namespace paybandit
