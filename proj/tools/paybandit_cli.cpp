// paybandit: simulate / tune / serve / report for bandit-driven payment
// gateway routing.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "paybandit/http_server.hpp"
#include "paybandit/paybandit.hpp"

namespace pb = paybandit;

namespace {

int g_verbosity = 0;

void info(const std::string& msg) {
  if (g_verbosity >= 1) std::cerr << "[info] " << msg << "\n";
}

void debug(const std::string& msg) {
  if (g_verbosity >= 2) std::cerr << "[debug] " << msg << "\n";
}

std::atomic<bool> g_shutdown{false};

void on_signal(int) { g_shutdown.store(true); }

struct SimInputs {
  std::unique_ptr<pb::ReplayEnv> env;
  std::uint64_t config_seed = 0;
};

// Builds the replay environment named by the config: either an inline
// synthetic schedule or a trace file plus its routing metadata.
SimInputs load_env(const nlohmann::json& cfg) {
  SimInputs out;
  if (cfg.contains("seed")) {
    out.config_seed = cfg.at("seed").get<std::uint64_t>();
  }
  const bool has_env = cfg.contains("env");
  const bool has_trace = cfg.contains("trace");
  if (has_env == has_trace) {
    throw pb::ConfigError("config needs exactly one of 'env' or 'trace'");
  }
  if (has_env) {
    out.env = pb::make_synthetic_env(
        pb::SyntheticEnvSpec::from_json(cfg.at("env")));
    return out;
  }
  const auto& t = cfg.at("trace");
  if (!t.contains("path")) throw pb::ConfigError("trace needs 'path'");
  if (!t.contains("routing")) throw pb::ConfigError("trace needs 'routing'");
  auto table = pb::RoutingTable::from_json(t.at("routing"));
  std::map<std::string, pb::ProcessorId> sources;
  if (t.contains("sources")) {
    for (auto it = t.at("sources").begin(); it != t.at("sources").end(); ++it) {
      sources[it.key()] = it.value().get<std::string>();
    }
  }
  std::size_t half_window = 25;
  if (t.contains("half_window")) {
    half_window = t.at("half_window").get<std::size_t>();
  }
  auto trace = pb::load_trace(t.at("path").get<std::string>(), std::move(table),
                              std::move(sources));
  info("loaded trace with " + std::to_string(trace.size()) + " records");
  auto env = std::make_unique<pb::TraceEnv>(trace, half_window);
  if (env->dropped() > 0) {
    info(std::to_string(env->dropped()) +
         " records dropped (no replayable gateway)");
  }
  out.env = std::move(env);
  return out;
}

std::vector<pb::PolicyConfig> load_policies(const nlohmann::json& cfg,
                                            std::size_t max_eligible) {
  if (!cfg.contains("policies") || !cfg.at("policies").is_array() ||
      cfg.at("policies").empty()) {
    throw pb::ConfigError("config needs a non-empty 'policies' array");
  }
  std::vector<pb::PolicyConfig> out;
  for (const auto& p : cfg.at("policies")) {
    auto c = pb::PolicyConfig::from_json(p);
    c.validate(max_eligible);
    out.push_back(std::move(c));
  }
  return out;
}

int run_simulate(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed_flag) {
  const auto cfg = pb::load_config_json(config_path);
  auto inputs = load_env(cfg);
  const std::uint64_t seed = seed_flag.value_or(inputs.config_seed);

  std::size_t max_eligible = 0;
  for (std::size_t t = 0; t < inputs.env->steps(); ++t) {
    max_eligible = std::max(max_eligible, inputs.env->eligible(t).size());
  }
  const auto policies = load_policies(cfg, max_eligible);

  std::map<std::string, int> kind_counts;
  std::vector<pb::RegretCurve> curves;
  for (const auto& policy : policies) {
    std::string label = pb::to_string(policy.kind);
    const int n = ++kind_counts[label];
    if (n > 1) label += "#" + std::to_string(n);
    info("replaying " + label);
    curves.push_back(pb::replay(*inputs.env, policy, seed, label));
    std::cout << label << ": final_regret="
              << pb::format_double(curves.back().final_regret()) << " steps="
              << curves.back().cumulative.size() << "\n";
  }
  pb::emit_regret(curves, out_dir);
  info("wrote " + out_dir + "/regret.csv and " + out_dir + "/summary.json");
  return 0;
}

int run_tune(const std::string& config_path, const std::string& out_dir,
             std::optional<std::uint64_t> seed_flag) {
  const auto cfg = pb::load_config_json(config_path);
  auto inputs = load_env(cfg);

  pb::Grid grid;
  if (cfg.contains("grid")) grid = pb::Grid::from_json(cfg.at("grid"));
  if (seed_flag) grid.seeds = {*seed_flag};

  std::vector<pb::PolicyKind> kinds;
  if (cfg.contains("kinds")) {
    for (const auto& k : cfg.at("kinds")) {
      kinds.push_back(pb::policy_kind_from_string(k.get<std::string>()));
    }
  } else {
    kinds = {pb::PolicyKind::EpsilonGreedy, pb::PolicyKind::SwUcb,
             pb::PolicyKind::SwBg,          pb::PolicyKind::DUcb,
             pb::PolicyKind::DBg,           pb::PolicyKind::DiscountedThompson};
  }

  std::size_t parallelism = 1;
  if (cfg.contains("parallelism")) {
    parallelism = cfg.at("parallelism").get<std::size_t>();
  }

  const auto report = pb::grid_search(*inputs.env, grid, kinds, parallelism);
  pb::emit_report(report, out_dir);
  for (const auto& [kind, best] : report.best) {
    std::cout << "best " << pb::to_string(kind) << ": " << best.params_label()
              << "\n";
  }
  std::size_t failed = 0;
  for (const auto& row : report.rows) {
    if (row.failed) {
      ++failed;
      debug("failed cell " + row.params + ": " + row.error);
    }
  }
  if (failed > 0) {
    std::cout << failed << " of " << report.rows.size() << " cells failed\n";
  }
  info("wrote " + out_dir + "/report.csv and " + out_dir + "/best.json");
  return 0;
}

int run_serve(const std::string& config_path, std::optional<int> port_flag,
              const std::string& restore_path) {
  auto raw = pb::load_config_json(config_path);
  if (port_flag) raw["port"] = *port_flag;
  auto cfg = pb::ServiceConfig::from_json(raw);

  std::unique_ptr<pb::Service> service;
  if (!restore_path.empty()) {
    service = pb::Service::restore(cfg, restore_path);
    info("restored state from " + restore_path);
  } else {
    service = std::make_unique<pb::Service>(cfg);
  }

  pb::HttpServer server(*service);
  if (!server.bind("0.0.0.0", cfg.port)) {
    std::cerr << "error: cannot bind port " << cfg.port << "\n";
    return 1;
  }
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  std::thread watcher([&server] {
    while (!g_shutdown.load() && server.is_running()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    server.stop();
  });

  std::thread snapshotter;
  if (!cfg.snapshot_path.empty()) {
    snapshotter = std::thread([&] {
      auto last = std::chrono::steady_clock::now();
      const auto interval =
          std::chrono::nanoseconds(cfg.snapshot_interval_ns);
      while (!g_shutdown.load() && server.is_running()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        const auto now = std::chrono::steady_clock::now();
        if (now - last >= interval) {
          service->snapshot(cfg.snapshot_path);
          debug("snapshot written to " + cfg.snapshot_path);
          last = now;
        }
      }
    });
  }

  std::cerr << "serving on 0.0.0.0:" << cfg.port << "\n";
  server.serve();
  g_shutdown.store(true);
  watcher.join();
  if (snapshotter.joinable()) snapshotter.join();
  if (!cfg.snapshot_path.empty()) {
    service->snapshot(cfg.snapshot_path);
    info("final snapshot written to " + cfg.snapshot_path);
  }
  return 0;
}

int run_report(const std::string& input_path, const std::string& out_dir,
               const std::string& baseline) {
  const bool is_json = input_path.size() > 5 &&
                       input_path.substr(input_path.size() - 5) == ".json";
  std::string name;
  std::string table;
  if (is_json) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(pb::read_file(input_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw pb::Error(std::string("input is not valid JSON: ") + e.what());
    }
    table = pb::summarize_metrics_json(doc, baseline);
    name = "arms.csv";
  } else {
    const auto content = pb::read_file(input_path);
    const auto eol = content.find('\n');
    const auto header =
        pb::detail::strip_cr(content.substr(0, eol == std::string::npos
                                                   ? content.size()
                                                   : eol));
    if (header == pb::kOutcomesHeader) {
      const auto rows = pb::parse_outcomes_csv(content);
      table = pb::format_uplift_csv(rows, pb::resolve_baseline(rows, baseline));
      name = "uplift.csv";
    } else if (header == pb::kRegretHeader) {
      table = pb::summarize_regret_csv(content);
      name = "regret_summary.csv";
    } else {
      throw pb::Error("unrecognized input header: '" + header + "'");
    }
  }
  if (out_dir.empty()) {
    std::cout << table;
  } else {
    pb::write_file_atomic(out_dir + "/" + name, table);
    info("wrote " + out_dir + "/" + name);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bandit-driven payment gateway routing toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string restore_path;
  std::string report_input;
  std::string baseline = "rule_based";
  std::optional<std::uint64_t> seed;
  std::optional<int> port;

  app.add_flag_function(
      "-v,--verbose",
      [](std::int64_t n) { g_verbosity = static_cast<int>(n); },
      "increase log verbosity (-vv for debug)");

  auto* sim = app.add_subcommand("simulate", "replay policies, emit regret");
  sim->add_option("--config", config_path, "config file")->required();
  sim->add_option("--out", out_dir, "output directory")->required();
  sim->add_option("--seed", seed, "seed override");

  auto* tune = app.add_subcommand("tune", "grid-search hyperparameters");
  tune->add_option("--config", config_path, "config file")->required();
  tune->add_option("--out", out_dir, "output directory")->required();
  tune->add_option("--seed", seed, "single-seed override");

  auto* serve = app.add_subcommand("serve", "run the routing service");
  serve->add_option("--config", config_path, "config file")->required();
  serve->add_option("--port", port, "port override");
  serve->add_option("--restore", restore_path, "snapshot to restore");

  auto* report = app.add_subcommand("report", "summarize outcomes or regret");
  report->add_option("input", report_input, "outcomes CSV, regret CSV, or metrics JSON")
      ->required();
  report->add_option("--out", out_dir, "output directory (default: stdout)");
  report->add_option("--baseline", baseline, "baseline arm label");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) return run_simulate(config_path, out_dir, seed);
    if (tune->parsed()) return run_tune(config_path, out_dir, seed);
    if (serve->parsed()) return run_serve(config_path, port, restore_path);
    if (report->parsed()) return run_report(report_input, out_dir, baseline);
  } catch (const pb::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
