#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "paybandit/errors.hpp"
#include "paybandit/service.hpp"

namespace paybandit {

// JSON-over-HTTP front end for a Service.  Head-of-line concerns stay in
// httplib's thread pool; all learning state lives in the Service.
class HttpServer {
 public:
  explicit HttpServer(Service& service) : service_(service) {
    server_.set_keep_alive_max_count(1 << 20);
    server_.new_task_queue = [this] {
      return new httplib::ThreadPool(service_.config().threads);
    };

    server_.Post("/route", [this](const httplib::Request& req,
                                  httplib::Response& res) {
      handle_route(req, res);
    });
    server_.Post("/reward", [this](const httplib::Request& req,
                                   httplib::Response& res) {
      handle_reward(req, res);
    });
    server_.Get("/metrics",
                [this](const httplib::Request&, httplib::Response& res) {
                  reply(res, 200, service_.metrics());
                });
    server_.Get("/healthz",
                [](const httplib::Request&, httplib::Response& res) {
                  res.set_content("ok", "text/plain");
                });
  }

  bool bind(const std::string& host, int port) {
    return server_.bind_to_port(host, port);
  }

  // Blocks until stop(); call after a successful bind.
  bool serve() { return server_.listen_after_bind(); }

  void stop() { server_.stop(); }

  bool is_running() const { return server_.is_running(); }

 private:
  static void reply(httplib::Response& res, int status,
                    const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static nlohmann::json error_body(const std::string& message) {
    nlohmann::json j;
    j["error"] = message;
    return j;
  }

  void handle_route(const httplib::Request& req, httplib::Response& res) {
    RouteRequest request;
    try {
      const auto body = nlohmann::json::parse(req.body);
      request.txn_id = body.at("txn_id").get<std::string>();
      request.processor = body.at("processor").get<std::string>();
      request.amount = body.at("amount").get<double>();
      if (body.contains("arm_override")) {
        request.arm_override = body.at("arm_override").get<std::string>();
      }
      if (request.amount < 0.0) {
        reply(res, 400, error_body("amount must be non-negative"));
        return;
      }
    } catch (const nlohmann::json::exception& e) {
      reply(res, 400, error_body(std::string("bad request body: ") + e.what()));
      return;
    }
    try {
      const auto decision = service_.route(request);
      nlohmann::json j;
      j["txn_id"] = decision.txn_id;
      j["gateway"] = decision.gateway;
      j["arm"] = decision.arm;
      j["policy"] = decision.policy;
      reply(res, 200, j);
    } catch (const UnknownProcessorError& e) {
      reply(res, 404, error_body(e.what()));
    } catch (const DuplicateTxnIdError& e) {
      reply(res, 409, error_body(e.what()));
    } catch (const AllRateLimitedError& e) {
      reply(res, 503, error_body(e.what()));
    } catch (const ConfigError& e) {
      reply(res, 400, error_body(e.what()));
    } catch (const Error& e) {
      reply(res, 500, error_body(e.what()));
    }
  }

  void handle_reward(const httplib::Request& req, httplib::Response& res) {
    std::string txn_id;
    int success = 0;
    try {
      const auto body = nlohmann::json::parse(req.body);
      txn_id = body.at("txn_id").get<std::string>();
      success = body.at("success").get<int>();
      if (success != 0 && success != 1) {
        reply(res, 400, error_body("success must be 0 or 1"));
        return;
      }
    } catch (const nlohmann::json::exception& e) {
      reply(res, 400, error_body(std::string("bad request body: ") + e.what()));
      return;
    }
    try {
      const auto result = service_.reward(txn_id, success);
      nlohmann::json j;
      j["applied"] = result.applied;
      j["late"] = result.late;
      reply(res, 200, j);
    } catch (const UnknownTxnError& e) {
      reply(res, 404, error_body(e.what()));
    } catch (const DuplicateRewardError& e) {
      reply(res, 409, error_body(e.what()));
    } catch (const Error& e) {
      reply(res, 500, error_body(e.what()));
    }
  }

  Service& service_;
  httplib::Server server_;
};

}  // namespace paybandit
