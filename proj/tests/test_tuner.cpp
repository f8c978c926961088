#include "paybandit/tuner.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <string>
#include <vector>

#include "paybandit/env.hpp"
#include "paybandit/errors.hpp"
#include "paybandit/replay.hpp"

namespace pb = paybandit;

namespace {

pb::SyntheticEnv flat_env(std::size_t steps, double p) {
  pb::SyntheticEnvSpec spec;
  spec.steps = steps;
  spec.table = pb::RoutingTable({{"p", {"g1", "g2"}}});
  spec.schedules["g1"] = {{0, p, {}}};
  spec.schedules["g2"] = {{0, p, {}}};
  return pb::SyntheticEnv(std::move(spec));
}

pb::SyntheticEnv abrupt_env(std::size_t steps) {
  pb::SyntheticEnvSpec spec;
  spec.steps = steps;
  spec.table = pb::RoutingTable({{"p", {"g1", "g2"}}});
  const std::size_t mid = steps / 2;
  spec.schedules["g1"] = {{0, 0.8, {}}, {mid, 0.2, {}}};
  spec.schedules["g2"] = {{0, 0.2, {}}, {mid, 0.8, {}}};
  return pb::SyntheticEnv(std::move(spec));
}

}  // namespace

TEST(GridCells, CountsPerKind) {
  pb::Grid g;
  g.window = {50, 100};
  g.alpha = {0.6, 0.9, 1.0};
  g.c1 = {0.5, 1.0};
  g.epsilon = {0.1};
  EXPECT_EQ(pb::grid_cells(pb::PolicyKind::EpsilonGreedy, g).size(), 2u);
  EXPECT_EQ(pb::grid_cells(pb::PolicyKind::SwUcb, g).size(), 4u);
  EXPECT_EQ(pb::grid_cells(pb::PolicyKind::SwBg, g).size(), 4u);
  EXPECT_EQ(pb::grid_cells(pb::PolicyKind::DUcb, g).size(), 6u);
  EXPECT_EQ(pb::grid_cells(pb::PolicyKind::DBg, g).size(), 6u);
  EXPECT_EQ(pb::grid_cells(pb::PolicyKind::DiscountedThompson, g).size(), 3u);
  EXPECT_THROW(pb::grid_cells(pb::PolicyKind::RuleBased, g), pb::ConfigError);
}

TEST(GridSearch, SingleCellMatchesDirectReplay) {
  auto env = flat_env(500, 0.5);
  pb::Grid grid;
  grid.window = {100};
  grid.c1 = {1.0};
  grid.seeds = {7};
  const auto report = pb::grid_search(env, grid, {pb::PolicyKind::SwUcb});
  ASSERT_EQ(report.rows.size(), 1u);
  const auto& row = report.rows[0];
  EXPECT_FALSE(row.failed);
  EXPECT_EQ(row.seeds_used, 1u);
  EXPECT_DOUBLE_EQ(row.stderr_of_mean, 0.0);

  pb::PolicyConfig direct;
  direct.kind = pb::PolicyKind::SwUcb;
  direct.window = 100;
  direct.c1 = 1.0;
  EXPECT_DOUBLE_EQ(row.mean_final_regret,
                   pb::replay(env, direct, 7).final_regret());
  ASSERT_EQ(report.best.count(pb::PolicyKind::SwUcb), 1u);
}

// With identical gateways every choice is optimal, so all cells tie at zero
// regret and the tie-break prefers the smaller window.
TEST(GridSearch, DegenerateEnvTiesResolveTowardSmallerWindow) {
  auto env = flat_env(300, 0.5);
  pb::Grid grid;
  grid.window = {100, 50, 200};
  grid.c1 = {1.0};
  grid.seeds = {0, 1, 2};
  const auto report = pb::grid_search(env, grid, {pb::PolicyKind::SwUcb});
  ASSERT_EQ(report.rows.size(), 3u);
  for (const auto& row : report.rows) {
    EXPECT_DOUBLE_EQ(row.mean_final_regret, 0.0);
    EXPECT_DOUBLE_EQ(row.stderr_of_mean, 0.0);
  }
  EXPECT_EQ(report.rows[0].config.window, 50u);
  EXPECT_EQ(report.best.at(pb::PolicyKind::SwUcb).window, 50u);
}

// On a mid-horizon swap a window larger than the horizon cannot win: it
// never stops averaging over the stale regime.
TEST(GridSearch, HorizonSizedWindowLosesOnAbruptChange) {
  auto env = abrupt_env(3000);
  pb::Grid grid;
  grid.window = {50, 200, 5000};
  grid.c1 = {0.5};
  grid.seeds = {0, 1, 2, 3, 4};
  const auto report = pb::grid_search(env, grid, {pb::PolicyKind::SwUcb});
  ASSERT_EQ(report.rows.size(), 3u);
  EXPECT_NE(report.best.at(pb::PolicyKind::SwUcb).window, 5000u);
  double regret_5000 = -1.0;
  double best_regret = report.rows[0].mean_final_regret;
  for (const auto& row : report.rows) {
    if (row.config.window == 5000u) regret_5000 = row.mean_final_regret;
  }
  EXPECT_GT(regret_5000, 2.0 * best_regret);
}

TEST(GridSearch, OversizedEpsilonCellFailsWithoutAbortingSweep) {
  auto env = flat_env(200, 0.5);
  pb::Grid grid;
  grid.window = {50};
  grid.epsilon = {0.1, 0.6};  // 0.6 > 1/2 for a two-gateway eligible set
  grid.seeds = {0};
  const auto report =
      pb::grid_search(env, grid, {pb::PolicyKind::EpsilonGreedy});
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_FALSE(report.rows[0].failed);
  EXPECT_TRUE(report.rows[1].failed);
  EXPECT_EQ(report.rows[1].seeds_used, 0u);
  EXPECT_FALSE(report.rows[1].error.empty());
  EXPECT_EQ(report.best.at(pb::PolicyKind::EpsilonGreedy).epsilon, 0.1);
}

TEST(GridSearch, ParallelismDoesNotChangeResults) {
  auto env = abrupt_env(600);
  pb::Grid grid;
  grid.window = {50, 100};
  grid.c1 = {0.5, 1.0};
  grid.alpha = {0.8, 0.95};
  grid.seeds = {0, 1};
  const std::vector<pb::PolicyKind> kinds = {
      pb::PolicyKind::SwUcb, pb::PolicyKind::DUcb,
      pb::PolicyKind::DiscountedThompson};
  const auto serial = pb::grid_search(env, grid, kinds, 1);
  const auto parallel = pb::grid_search(env, grid, kinds, 4);
  ASSERT_EQ(serial.rows.size(), parallel.rows.size());
  for (std::size_t i = 0; i < serial.rows.size(); ++i) {
    EXPECT_EQ(serial.rows[i].params, parallel.rows[i].params);
    EXPECT_DOUBLE_EQ(serial.rows[i].mean_final_regret,
                     parallel.rows[i].mean_final_regret);
  }
  EXPECT_EQ(pb::format_tune_csv(serial), pb::format_tune_csv(parallel));
}

TEST(GridSearch, RowsSortedByMeanRegret) {
  auto env = abrupt_env(1000);
  pb::Grid grid;
  grid.window = {50, 5000};
  grid.c1 = {0.5};
  grid.seeds = {0, 1, 2};
  const auto report = pb::grid_search(env, grid, {pb::PolicyKind::SwUcb});
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    EXPECT_LE(report.rows[i - 1].mean_final_regret,
              report.rows[i].mean_final_regret);
  }
}

TEST(TuneReportIo, CsvAndBestJson) {
  auto env = flat_env(200, 0.5);
  pb::Grid grid;
  grid.window = {50};
  grid.c1 = {1.0};
  grid.alpha = {0.9};
  grid.seeds = {0};
  const auto report = pb::grid_search(
      env, grid, {pb::PolicyKind::SwUcb, pb::PolicyKind::DiscountedThompson});

  const std::string dir = testing::TempDir() + "tune_report_test";
  ASSERT_EQ(std::system(("mkdir -p " + dir).c_str()), 0);
  pb::emit_report(report, dir);

  const auto csv = pb::read_file(dir + "/report.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), pb::kTuneHeader);
  EXPECT_NE(csv.find("sw_ucb,W=50 c1=1,"), std::string::npos);

  // Every best entry must load back into a valid config with a zeroed seed.
  const auto best = nlohmann::json::parse(pb::read_file(dir + "/best.json"));
  ASSERT_EQ(best.size(), 2u);
  for (const auto& [kind, cfg] : best.items()) {
    const auto parsed = pb::PolicyConfig::from_json(cfg);
    EXPECT_EQ(pb::to_string(parsed.kind), kind);
    EXPECT_EQ(parsed.seed, 0u);
  }
}

TEST(TuneReportIo, EmptyReportRejected) {
  pb::TuneReport empty;
  EXPECT_THROW(pb::format_tune_csv(empty), pb::Error);
  EXPECT_THROW(pb::emit_report(empty, testing::TempDir()), pb::Error);
}

TEST(GridSearch, DeterministicAcrossRuns) {
  auto env = abrupt_env(400);
  pb::Grid grid;
  grid.alpha = {0.7, 0.9};
  grid.c1 = {1.0};
  grid.seeds = {3, 4};
  const auto a = pb::grid_search(env, grid, {pb::PolicyKind::DBg});
  const auto b = pb::grid_search(env, grid, {pb::PolicyKind::DBg});
  EXPECT_EQ(pb::format_tune_csv(a), pb::format_tune_csv(b));
}
