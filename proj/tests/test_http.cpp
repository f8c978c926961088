#include "paybandit/http_server.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <memory>
#include <string>
#include <thread>
#include <utility>

#include "paybandit/service.hpp"
#include "paybandit/util.hpp"

namespace pb = paybandit;

namespace {

pb::ServiceConfig base_config() {
  pb::ServiceConfig cfg;
  cfg.routing = pb::RoutingTable({{"upi", {"g1", "g2"}}});
  cfg.experiment.salt = "http-test";
  pb::PolicyConfig rule;
  rule.kind = pb::PolicyKind::RuleBased;
  rule.priority = {"g1", "g2"};
  cfg.experiment.arms = {{"control", 1.0, rule}};
  cfg.threads = 2;
  return cfg;
}

// Frozen clock: token buckets never refill and TTLs never expire, so HTTP
// status assertions cannot race wall time.
pb::Clock frozen_clock() {
  return [] { return pb::Timestamp{0}; };
}

// Service plus a listening server on an ephemeral loopback port.
struct Harness {
  pb::Service svc;
  pb::HttpServer server;
  std::thread worker;
  int port = 0;

  explicit Harness(pb::ServiceConfig cfg)
      : svc(std::move(cfg), frozen_clock()), server(svc) {
    const auto seed = static_cast<std::uint64_t>(pb::steady_now_ns());
    for (int attempt = 0; attempt < 50; ++attempt) {
      const int candidate =
          17000 + static_cast<int>(pb::splitmix64(seed + attempt) % 40000);
      if (server.bind("127.0.0.1", candidate)) {
        port = candidate;
        break;
      }
    }
    if (port == 0) throw pb::Error("no free loopback port found");
    worker = std::thread([this] { server.serve(); });
    for (int i = 0; i < 200 && !server.is_running(); ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }

  ~Harness() {
    server.stop();
    if (worker.joinable()) worker.join();
  }

  httplib::Client client() {
    httplib::Client cli("127.0.0.1", port);
    cli.set_connection_timeout(5);
    cli.set_read_timeout(5);
    return cli;
  }
};

nlohmann::json body_of(const httplib::Result& res) {
  return nlohmann::json::parse(res->body);
}

nlohmann::json route_body(const std::string& id) {
  return {{"txn_id", id}, {"processor", "upi"}, {"amount", 250.0}};
}

}  // namespace

TEST(HttpServer, HealthzAnswers) {
  Harness h(base_config());
  auto cli = h.client();
  const auto res = cli.Get("/healthz");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body, "ok");
}

TEST(HttpServer, RouteReturnsDecisionJson) {
  Harness h(base_config());
  auto cli = h.client();
  const auto res =
      cli.Post("/route", route_body("t1").dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto j = body_of(res);
  EXPECT_EQ(j.at("txn_id"), "t1");
  EXPECT_EQ(j.at("gateway"), "g1");
  EXPECT_EQ(j.at("arm"), "control");
  EXPECT_EQ(j.at("policy"), "rule_based");
}

TEST(HttpServer, RouteRejectsBadRequests) {
  Harness h(base_config());
  auto cli = h.client();

  auto post = [&](const std::string& body) {
    const auto res = cli.Post("/route", body, "application/json");
    EXPECT_TRUE(res);
    return res ? res->status : -1;
  };

  EXPECT_EQ(post("{not json"), 400);
  EXPECT_EQ(post(R"({"processor": "upi", "amount": 1.0})"), 400);
  EXPECT_EQ(post(
      R"({"txn_id": "t1", "processor": "upi", "amount": -5.0})"), 400);
  EXPECT_EQ(post(
      R"({"txn_id": "t1", "processor": "wallet", "amount": 1.0})"), 404);
  EXPECT_EQ(post(route_body("dup").dump()), 200);
  EXPECT_EQ(post(route_body("dup").dump()), 409);
  auto with_override = route_body("t2");
  with_override["arm_override"] = "nonexistent";
  EXPECT_EQ(post(with_override.dump()), 400);
}

TEST(HttpServer, ExhaustedGatewaysReport503) {
  auto cfg = base_config();
  cfg.rate_limit.caps["g1"] = 1;
  cfg.rate_limit.caps["g2"] = 1;
  Harness h(cfg);
  auto cli = h.client();
  for (int i = 0; i < 2; ++i) {
    const auto res = cli.Post(
        "/route", route_body("t" + std::to_string(i)).dump(),
        "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200);
  }
  const auto res =
      cli.Post("/route", route_body("t3").dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 503);
  EXPECT_NE(body_of(res).at("error").get<std::string>().find("rate limited"),
            std::string::npos);
}

TEST(HttpServer, RewardStatusCodes) {
  Harness h(base_config());
  auto cli = h.client();
  ASSERT_EQ(
      cli.Post("/route", route_body("t1").dump(), "application/json")->status,
      200);

  auto reward = [&](const nlohmann::json& j) {
    const auto res = cli.Post("/reward", j.dump(), "application/json");
    EXPECT_TRUE(res);
    return res ? res->status : -1;
  };

  const auto ok = cli.Post(
      "/reward", nlohmann::json{{"txn_id", "t1"}, {"success", 1}}.dump(),
      "application/json");
  ASSERT_TRUE(ok);
  EXPECT_EQ(ok->status, 200);
  EXPECT_TRUE(body_of(ok).at("applied").get<bool>());
  EXPECT_FALSE(body_of(ok).at("late").get<bool>());

  EXPECT_EQ(reward({{"txn_id", "t1"}, {"success", 1}}), 409);
  EXPECT_EQ(reward({{"txn_id", "ghost"}, {"success", 0}}), 404);
  EXPECT_EQ(reward({{"txn_id", "t1"}, {"success", 2}}), 400);
  EXPECT_EQ(reward({{"txn_id", "t1"}}), 400);
}

TEST(HttpServer, MetricsEndpointTracksTraffic) {
  Harness h(base_config());
  auto cli = h.client();
  cli.Post("/route", route_body("t1").dump(), "application/json");
  cli.Post("/reward", nlohmann::json{{"txn_id", "t1"}, {"success", 1}}.dump(),
           "application/json");

  const auto res = cli.Get("/metrics");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto j = body_of(res);
  EXPECT_EQ(j.at("arms").at("control").at("routed"), 1u);
  EXPECT_EQ(j.at("arms").at("control").at("rewarded"), 1u);
  EXPECT_EQ(j.at("arms").at("control").at("successes"), 1u);
  EXPECT_EQ(j.at("pending"), 0u);
  EXPECT_TRUE(j.contains("counters"));
  EXPECT_TRUE(j.contains("latency"));
}
