#include "paybandit/service.hpp"

#include <gtest/gtest.h>

#include <deque>
#include <fstream>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "paybandit/errors.hpp"
#include "paybandit/policy.hpp"
#include "paybandit/util.hpp"

namespace pb = paybandit;

namespace {

constexpr pb::Timestamp kSec = pb::kNanosPerSecond;
constexpr pb::Timestamp kMs = pb::kNanosPerMilli;
constexpr pb::Timestamp kHour = 3600 * kSec;

struct ManualClock {
  std::shared_ptr<pb::Timestamp> now = std::make_shared<pb::Timestamp>(0);
  pb::Clock fn() const {
    auto n = now;
    return [n] { return *n; };
  }
  void set(pb::Timestamp t) { *now = t; }
  void advance(pb::Timestamp dt) { *now += dt; }
};

pb::PolicyConfig rule(std::vector<pb::GatewayId> priority) {
  pb::PolicyConfig c;
  c.kind = pb::PolicyKind::RuleBased;
  c.priority = std::move(priority);
  return c;
}

pb::PolicyConfig sw_ucb(std::uint64_t seed) {
  pb::PolicyConfig c;
  c.kind = pb::PolicyKind::SwUcb;
  c.window = 200;
  c.c1 = 1.0;
  c.seed = seed;
  return c;
}

pb::PolicyConfig thompson(std::uint64_t seed) {
  pb::PolicyConfig c;
  c.kind = pb::PolicyKind::DiscountedThompson;
  c.alpha = 0.9;
  c.seed = seed;
  return c;
}

pb::PolicyConfig eps_greedy(std::uint64_t seed) {
  pb::PolicyConfig c;
  c.kind = pb::PolicyKind::EpsilonGreedy;
  c.window = 200;
  c.epsilon = 0.2;
  c.seed = seed;
  return c;
}

// Single processor, one rule-based arm. The simplest config that routes.
pb::ServiceConfig rule_only_config() {
  pb::ServiceConfig cfg;
  cfg.routing = pb::RoutingTable({{"upi", {"g1", "g2"}}});
  cfg.experiment.salt = "svc-test";
  cfg.experiment.arms = {{"control", 1.0, rule({"g1", "g2"})}};
  return cfg;
}

pb::ServiceConfig two_arm_config() {
  pb::ServiceConfig cfg;
  cfg.routing = pb::RoutingTable({{"upi", {"g1", "g2"}}});
  cfg.experiment.salt = "svc-test";
  cfg.experiment.arms = {{"control", 0.5, rule({"g1", "g2"})},
                         {"bandit", 0.5, sw_ucb(11)}};
  return cfg;
}

pb::RouteRequest req(const std::string& id,
                     const std::string& processor = "upi") {
  pb::RouteRequest r;
  r.txn_id = id;
  r.processor = processor;
  r.amount = 100.0;
  return r;
}

std::string tmp_path(const std::string& stem) {
  return ::testing::TempDir() + "/svc_" + stem + "_" +
         ::testing::UnitTest::GetInstance()->current_test_info()->name() +
         ".json";
}

}  // namespace

TEST(ServiceConfigJson, ParsesFullDocument) {
  const auto j = nlohmann::json::parse(R"({
    "routing": {"upi": ["g1", "g2"], "card": ["g2", "g3"]},
    "experiment": {
      "salt": "prod-2024",
      "arms": [
        {"label": "control", "weight": 0.4,
         "policy": {"kind": "rule_based", "priority": ["g1", "g2", "g3"]}},
        {"label": "bandit", "weight": 0.6,
         "policy": {"kind": "sw_ucb", "window": 200, "c1": 1.0, "seed": 3}}
      ]
    },
    "rate_limit": {"caps": {"g1": 500}, "granularity_ms": 10},
    "pacing": {"minima": {"g3": 1000}, "horizon_seconds": 86400, "slack": 10},
    "snapshot": {"path": "/tmp/x.json", "interval_seconds": 5},
    "pending_ttl_seconds": 90,
    "pending_capacity": 50000,
    "port": 9090,
    "threads": 4
  })");
  const auto cfg = pb::ServiceConfig::from_json(j);
  EXPECT_EQ(cfg.port, 9090);
  EXPECT_EQ(cfg.threads, 4u);
  EXPECT_EQ(cfg.rate_limit.caps.at("g1"), 500u);
  EXPECT_EQ(cfg.rate_limit.granularity_ns, 10 * kMs);
  EXPECT_EQ(cfg.pacing.minima.at("g3"), 1000u);
  EXPECT_EQ(cfg.pending_ttl_ns, 90 * kSec);
  EXPECT_EQ(cfg.pending_capacity, 50000u);
  EXPECT_EQ(cfg.snapshot_path, "/tmp/x.json");
  EXPECT_EQ(cfg.snapshot_interval_ns, 5 * kSec);
}

TEST(ServiceConfigJson, RejectsInconsistentDocuments) {
  auto cfg = two_arm_config();
  cfg.rate_limit.caps["ghost"] = 10;
  EXPECT_THROW(cfg.validate(), pb::ConfigError);

  cfg = two_arm_config();
  cfg.pacing.minima["ghost"] = 10;
  EXPECT_THROW(cfg.validate(), pb::ConfigError);

  cfg = two_arm_config();
  cfg.experiment.arms[0].policy.priority = {"ghost"};
  EXPECT_THROW(cfg.validate(), pb::ConfigError);

  // A priority list that never mentions a processor's gateways would leave
  // that processor unroutable for the rule arm.
  cfg = two_arm_config();
  cfg.routing = pb::RoutingTable({{"upi", {"g1"}}, {"card", {"g2"}}});
  cfg.experiment.arms[0].policy.priority = {"g1"};
  EXPECT_THROW(cfg.validate(), pb::ConfigError);

  cfg = two_arm_config();
  cfg.port = 0;
  EXPECT_THROW(cfg.validate(), pb::ConfigError);

  cfg = two_arm_config();
  cfg.threads = 0;
  EXPECT_THROW(cfg.validate(), pb::ConfigError);

  cfg = two_arm_config();
  cfg.pending_ttl_ns = 0;
  EXPECT_THROW(cfg.validate(), pb::ConfigError);
}

TEST(ServiceRoute, DecisionNamesArmPolicyAndGateway) {
  ManualClock clock;
  clock.set(1000);
  pb::Service svc(rule_only_config(), clock.fn());
  const auto d = svc.route(req("t1"));
  EXPECT_EQ(d.txn_id, "t1");
  EXPECT_EQ(d.gateway, "g1");
  EXPECT_EQ(d.arm, "control");
  EXPECT_EQ(d.policy, "rule_based");
  EXPECT_EQ(d.decided_at, 1000);
  EXPECT_EQ(svc.pending_size(), 1u);
}

TEST(ServiceRoute, RejectsDuplicateEmptyAndUnknown) {
  ManualClock clock;
  pb::Service svc(rule_only_config(), clock.fn());
  svc.route(req("t1"));
  EXPECT_THROW(svc.route(req("t1")), pb::DuplicateTxnIdError);
  EXPECT_THROW(svc.route(req("")), pb::ConfigError);
  EXPECT_THROW(svc.route(req("t2", "wallet")), pb::UnknownProcessorError);
  // A rewarded transaction is still a duplicate, not a fresh id.
  svc.reward("t1", 1);
  EXPECT_THROW(svc.route(req("t1")), pb::DuplicateTxnIdError);
}

TEST(ServiceRoute, ArmOverrideBypassesHashSplit) {
  ManualClock clock;
  pb::Service svc(two_arm_config(), clock.fn());
  for (int i = 0; i < 20; ++i) {
    auto r = req("ov" + std::to_string(i));
    r.arm_override = "bandit";
    EXPECT_EQ(svc.route(r).arm, "bandit");
  }
  auto r = req("ov-bad");
  r.arm_override = "nonexistent";
  EXPECT_THROW(svc.route(r), pb::ConfigError);
}

TEST(ServiceRoute, HashSplitSpreadsTrafficAcrossArms) {
  ManualClock clock;
  pb::Service svc(two_arm_config(), clock.fn());
  int control = 0;
  for (int i = 0; i < 400; ++i) {
    if (svc.route(req("h" + std::to_string(i))).arm == "control") ++control;
  }
  // 50/50 split; 6 sigma on 400 draws is 60.
  EXPECT_GT(control, 140);
  EXPECT_LT(control, 260);
}

TEST(ServiceRoute, FallsBackWhenPreferredGatewayHasNoTokens) {
  auto cfg = rule_only_config();
  cfg.rate_limit.caps["g1"] = 1;
  ManualClock clock;
  pb::Service svc(cfg, clock.fn());
  EXPECT_EQ(svc.route(req("t1")).gateway, "g1");
  // g1 is drained for this second; the policy only sees g2.
  EXPECT_EQ(svc.route(req("t2")).gateway, "g2");
}

TEST(ServiceRoute, AllGatewaysLimitedRaisesAndRecovers) {
  auto cfg = rule_only_config();
  cfg.rate_limit.caps["g1"] = 1;
  cfg.rate_limit.caps["g2"] = 1;
  ManualClock clock;
  pb::Service svc(cfg, clock.fn());
  svc.route(req("t1"));
  svc.route(req("t2"));
  EXPECT_THROW(svc.route(req("t3")), pb::AllRateLimitedError);
  EXPECT_EQ(svc.metrics()["counters"]["rate_limit_rejections"], 1u);
  clock.advance(kSec);
  EXPECT_NO_THROW(svc.route(req("t4")));
}

TEST(ServicePacing, LaggingMinimumForcesTheGateway) {
  auto cfg = rule_only_config();
  cfg.pacing.minima["g2"] = 1000;
  ManualClock clock;
  pb::Service svc(cfg, clock.fn());
  clock.set(12 * kHour);
  // The rule arm prefers g1, but g2 owes roughly 500 transactions by now.
  const auto d = svc.route(req("t1"));
  EXPECT_EQ(d.gateway, "g2");
  EXPECT_EQ(svc.metrics()["counters"]["pacing_overrides"], 1u);
}

TEST(ServicePacing, BlockedOverrideFallsThroughToPolicy) {
  auto cfg = rule_only_config();
  cfg.pacing.minima["g2"] = 1000;
  cfg.rate_limit.caps["g2"] = 1;
  ManualClock clock;
  pb::Service svc(cfg, clock.fn());
  clock.set(12 * kHour);
  EXPECT_EQ(svc.route(req("t1")).gateway, "g2");
  // g2 still owes traffic but its bucket is empty: the override is refused
  // and the normal policy path routes through g1.
  EXPECT_EQ(svc.route(req("t2")).gateway, "g1");
  const auto m = svc.metrics();
  EXPECT_EQ(m["counters"]["pacing_overrides"], 1u);
  EXPECT_EQ(m["counters"]["pacing_blocked"], 1u);
}

TEST(ServiceReward, AppliedRewardReachesTheArmPolicy) {
  ManualClock clock;
  auto cfg = rule_only_config();
  cfg.experiment.arms = {{"bandit", 1.0, sw_ucb(5)}};
  pb::Service svc(cfg, clock.fn());
  pb::PolicyState mirror(sw_ucb(5), cfg.routing.gateways());
  const std::vector<pb::GatewayId> eligible = {"g1", "g2"};

  const auto d = svc.route(req("t1"));
  EXPECT_EQ(mirror.select(eligible), d.gateway);
  const auto res = svc.reward("t1", 1);
  EXPECT_TRUE(res.applied);
  EXPECT_FALSE(res.late);
  mirror.update(d.gateway, 1);
  EXPECT_TRUE(svc.policy_states()[0] == mirror);
}

TEST(ServiceReward, PastTtlIsLateAndLeavesPolicyUntouched) {
  ManualClock clock;
  auto cfg = rule_only_config();
  cfg.experiment.arms = {{"bandit", 1.0, sw_ucb(5)}};
  cfg.pending_ttl_ns = 120 * kSec;
  pb::Service svc(cfg, clock.fn());

  svc.route(req("t1"));
  const auto before = svc.policy_states();
  clock.set(120 * kSec + 1);
  const auto res = svc.reward("t1", 1);
  EXPECT_FALSE(res.applied);
  EXPECT_TRUE(res.late);
  EXPECT_TRUE(svc.policy_states()[0] == before[0]);
  EXPECT_EQ(svc.metrics()["counters"]["late_rewards"], 1u);
  EXPECT_THROW(svc.reward("t1", 1), pb::DuplicateRewardError);
}

TEST(ServiceReward, UnknownAndDuplicateRaiseDistinctErrors) {
  ManualClock clock;
  pb::Service svc(rule_only_config(), clock.fn());
  EXPECT_THROW(svc.reward("ghost", 1), pb::UnknownTxnError);
  svc.route(req("t1"));
  svc.reward("t1", 0);
  EXPECT_THROW(svc.reward("t1", 0), pb::DuplicateRewardError);
  const auto m = svc.metrics();
  EXPECT_EQ(m["counters"]["unknown_rewards"], 1u);
  EXPECT_EQ(m["counters"]["duplicate_rewards"], 1u);
}

// Rewards arrive well after their decisions, out of phase with routing.  The
// arm's learned state must equal a mirror policy that saw the same decisions
// and the same rewards in receipt order.
TEST(ServiceReward, DelayedRewardsMatchReceiptOrderMirror) {
  ManualClock clock;
  auto cfg = rule_only_config();
  cfg.experiment.arms = {{"bandit", 1.0, sw_ucb(7)}};
  pb::Service svc(cfg, clock.fn());
  pb::PolicyState mirror(sw_ucb(7), cfg.routing.gateways());
  const std::vector<pb::GatewayId> eligible = {"g1", "g2"};

  std::deque<std::tuple<std::string, pb::GatewayId, int>> in_flight;
  std::uint64_t successes = 0;
  auto deliver_oldest = [&] {
    const auto [id, gw, r] = in_flight.front();
    in_flight.pop_front();
    ASSERT_TRUE(svc.reward(id, r).applied);
    mirror.update(gw, r);
    successes += static_cast<std::uint64_t>(r);
  };

  for (int i = 0; i < 2000; ++i) {
    if (in_flight.size() >= 17) deliver_oldest();
    clock.advance(kMs);
    const auto id = "t" + std::to_string(i);
    const auto d = svc.route(req(id));
    ASSERT_EQ(mirror.select(eligible), d.gateway) << "diverged at txn " << i;
    const int r = static_cast<int>(pb::splitmix64(i) & 1);
    in_flight.emplace_back(id, d.gateway, r);
  }
  while (!in_flight.empty()) deliver_oldest();

  EXPECT_TRUE(svc.policy_states()[0] == mirror);
  const auto arm = svc.metrics()["arms"]["bandit"];
  EXPECT_EQ(arm["routed"], 2000u);
  EXPECT_EQ(arm["rewarded"], 2000u);
  EXPECT_EQ(arm["successes"], successes);
}

TEST(ServiceMetrics, FreshServiceReportsNulls) {
  ManualClock clock;
  pb::Service svc(two_arm_config(), clock.fn());
  const auto m = svc.metrics();
  EXPECT_EQ(m["pending"], 0u);
  EXPECT_EQ(m["expired_pending"], 0u);
  EXPECT_EQ(m["baseline_arm"], "control");
  EXPECT_TRUE(m["arms"]["control"]["success_rate"].is_null());
  EXPECT_TRUE(m["arms"]["bandit"]["uplift_vs_baseline"].is_null());
  EXPECT_EQ(m["counters"]["rate_limit_rejections"], 0u);
  EXPECT_TRUE(m["latency"]["p99_us"].is_null());
}

TEST(ServiceMetrics, UpliftIsMeasuredAgainstTheRuleArm) {
  ManualClock clock;
  pb::Service svc(two_arm_config(), clock.fn());
  // Steer traffic explicitly and shape the outcomes: control succeeds half
  // the time, the bandit arm 55 of every 100.
  for (int i = 0; i < 400; ++i) {
    auto rc = req("c" + std::to_string(i));
    rc.arm_override = "control";
    svc.route(rc);
    svc.reward(rc.txn_id, i % 2 == 0 ? 1 : 0);

    auto rb = req("b" + std::to_string(i));
    rb.arm_override = "bandit";
    svc.route(rb);
    svc.reward(rb.txn_id, i % 100 < 55 ? 1 : 0);
  }
  const auto m = svc.metrics();
  EXPECT_DOUBLE_EQ(m["arms"]["control"]["success_rate"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(m["arms"]["bandit"]["success_rate"].get<double>(), 0.55);
  EXPECT_TRUE(m["arms"]["control"]["uplift_vs_baseline"].is_null());
  EXPECT_NEAR(m["arms"]["bandit"]["uplift_vs_baseline"].get<double>(), 0.05,
              1e-12);
  EXPECT_EQ(m["latency"]["count"], 800u);
}

// Snapshot, restore, then drive both services in lockstep: every later
// decision and metric must agree.
TEST(ServiceSnapshot, RestoredServiceIsBehaviorallyIdentical) {
  ManualClock clock;
  pb::ServiceConfig cfg;
  cfg.routing = pb::RoutingTable({{"upi", {"g1", "g2"}}});
  cfg.experiment.salt = "prod-2024";
  cfg.experiment.arms = {{"control", 0.1, rule({"g1", "g2"})},
                         {"swucb", 0.3, sw_ucb(21)},
                         {"dts", 0.3, thompson(22)},
                         {"eps", 0.3, eps_greedy(23)}};
  pb::Service svc(cfg, clock.fn());

  std::deque<std::tuple<std::string, int>> in_flight;
  for (int i = 0; i < 400; ++i) {
    if (in_flight.size() >= 10) {
      const auto [id, r] = in_flight.front();
      in_flight.pop_front();
      svc.reward(id, r);
    }
    clock.advance(kMs);
    const auto id = "p" + std::to_string(i);
    svc.route(req(id));
    in_flight.emplace_back(id, static_cast<int>(pb::splitmix64(i) >> 7 & 1));
  }

  const auto path = tmp_path("roundtrip");
  svc.snapshot(path);
  auto restored = pb::Service::restore(cfg, path, clock.fn());
  ASSERT_TRUE(svc.state_equals(*restored));

  // The 10 in-flight decisions were snapshotted as pending; both services
  // must accept their rewards.
  while (!in_flight.empty()) {
    const auto [id, r] = in_flight.front();
    in_flight.pop_front();
    EXPECT_TRUE(svc.reward(id, r).applied);
    EXPECT_TRUE(restored->reward(id, r).applied);
  }

  for (int i = 0; i < 400; ++i) {
    clock.advance(kMs);
    const auto id = "q" + std::to_string(i);
    const auto da = svc.route(req(id));
    const auto db = restored->route(req(id));
    ASSERT_EQ(da.gateway, db.gateway) << "diverged at txn " << i;
    ASSERT_EQ(da.arm, db.arm);
    const int r = static_cast<int>(pb::splitmix64(1000 + i) & 1);
    svc.reward(id, r);
    restored->reward(id, r);
  }
  EXPECT_TRUE(svc.state_equals(*restored));

  auto ma = svc.metrics();
  auto mb = restored->metrics();
  ma.erase("latency");
  mb.erase("latency");
  EXPECT_EQ(ma, mb);
}

TEST(ServiceSnapshot, TruncatedFileIsCorrupt) {
  ManualClock clock;
  pb::Service svc(rule_only_config(), clock.fn());
  svc.route(req("t1"));
  const auto path = tmp_path("trunc");
  svc.snapshot(path);
  const auto full = pb::read_file(path);
  {
    std::ofstream out(path, std::ios::trunc);
    out << full.substr(0, full.size() / 2);
  }
  EXPECT_THROW(pb::Service::restore(rule_only_config(), path, clock.fn()),
               pb::CorruptSnapshotError);
}

TEST(ServiceSnapshot, WrongVersionIsRejected) {
  ManualClock clock;
  pb::Service svc(rule_only_config(), clock.fn());
  const auto path = tmp_path("version");
  svc.snapshot(path);
  auto file = nlohmann::json::parse(pb::read_file(path));
  file["version"] = 99;
  pb::write_file_atomic(path, file.dump());
  EXPECT_THROW(pb::Service::restore(rule_only_config(), path, clock.fn()),
               pb::VersionMismatchError);
}

TEST(ServiceSnapshot, TamperedPayloadFailsTheChecksum) {
  ManualClock clock;
  pb::Service svc(rule_only_config(), clock.fn());
  svc.route(req("t1"));
  const auto path = tmp_path("tamper");
  svc.snapshot(path);
  auto file = nlohmann::json::parse(pb::read_file(path));
  file["payload"]["counters"]["late_rewards"] = 7;
  pb::write_file_atomic(path, file.dump());
  EXPECT_THROW(pb::Service::restore(rule_only_config(), path, clock.fn()),
               pb::CorruptSnapshotError);

  file.erase("checksum");
  pb::write_file_atomic(path, file.dump());
  EXPECT_THROW(pb::Service::restore(rule_only_config(), path, clock.fn()),
               pb::CorruptSnapshotError);
}

TEST(ServiceSnapshot, ConfigDriftIsRejectedOnRestore) {
  ManualClock clock;
  auto cfg = two_arm_config();
  pb::Service svc(cfg, clock.fn());
  const auto path = tmp_path("drift");
  svc.snapshot(path);

  // Same labels, different hyperparameters: the learned state would be
  // meaningless under the new config.
  auto changed = cfg;
  changed.experiment.arms[1].policy.window = 100;
  EXPECT_THROW(pb::Service::restore(changed, path, clock.fn()),
               pb::ConfigError);

  auto fewer = cfg;
  fewer.experiment.arms = {cfg.experiment.arms[0]};
  fewer.experiment.arms[0].weight = 1.0;
  EXPECT_THROW(pb::Service::restore(fewer, path, clock.fn()),
               pb::ConfigError);
}
