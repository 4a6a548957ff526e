#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <pthread.h>
#include <thread>

#include "polyswarm/config.hpp"
#include "polyswarm/errors.hpp"
#include "polyswarm/log.hpp"
#include "polyswarm/orchestrator.hpp"
#include "polyswarm/persistence.hpp"
#include "polyswarm/server.hpp"

using namespace polyswarm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

LogLevel log_level_from(const std::string& s) {
  if (s == "debug") return LogLevel::debug;
  if (s == "warn") return LogLevel::warn;
  if (s == "error") return LogLevel::error;
  return LogLevel::info;
}

// Blocks SIGINT/SIGTERM in every thread and stops the engine from a
// dedicated waiter thread.
class SignalStopper {
 public:
  SignalStopper() {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    sigaddset(&set_, SIGUSR1);
    pthread_sigmask(SIG_BLOCK, &set_, nullptr);
  }

  void watch(Engine& engine) {
    waiter_ = std::thread([this, &engine] {
      int sig = 0;
      sigwait(&set_, &sig);
      if (sig == SIGUSR1) return;
      Log::info("signal received, stopping after the current cycle");
      engine.stop();
    });
  }

  ~SignalStopper() {
    if (waiter_.joinable()) {
      pthread_kill(waiter_.native_handle(), SIGUSR1);
      waiter_.join();
    }
  }

 private:
  sigset_t set_{};
  std::thread waiter_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prediction-market swarm trading terminal"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "flat KEY = value config file")->check(CLI::ExistingFile);

  std::map<std::string, std::string> flag_values;
  for (const auto& key : config_keys()) {
    app.add_option("--" + flag_name(key.name), flag_values[std::string(key.name)], std::string(key.help))
        ->group("Configuration");
  }

  auto* run = app.add_subcommand("run", "run the scan loop");
  std::size_t max_cycles = 0;
  bool serve = false;
  bool quiet = false;
  std::string report_out;
  run->add_option("--max-cycles", max_cycles, "stop after N cycles (0 = run until interrupted)");
  run->add_flag("--serve", serve, "start the REST/WebSocket server");
  run->add_option("--report-out", report_out, "write ScanCycleReport JSON lines to this file");
  run->add_flag("--quiet", quiet, "do not print cycle reports to stdout");

  auto* evaluate = app.add_subcommand("evaluate", "score resolved forecasts from the store");
  std::string source = "combined";
  std::optional<TimestampMs> from_ts;
  std::optional<TimestampMs> to_ts;
  std::string csv_out;
  std::size_t bins = 10;
  evaluate->add_option("--source", source, "combined, swarm, market or agent")
      ->check(CLI::IsMember({"combined", "swarm", "market", "agent"}));
  evaluate->add_option("--from", from_ts, "first resolution time (epoch ms)");
  evaluate->add_option("--to", to_ts, "last resolution time (epoch ms)");
  evaluate->add_option("--csv", csv_out, "write the reliability table as CSV");
  evaluate->add_option("--bins", bins, "reliability bins")->check(CLI::Range(2, 1000));

  auto* exporter = app.add_subcommand("export", "dump tables as line-delimited JSON");
  std::string table = "all";
  std::string out_path;
  exporter->add_option("--table", table, "table name or all");
  exporter->add_option("--out", out_path, "output file (default stdout)");

  auto* replay = app.add_subcommand("replay", "rebuild ledger, risk and control state from the store");
  std::int64_t from_seq = 0;
  replay->add_option("--from-seq", from_seq, "first sequence number to fold");

  auto* compact = app.add_subcommand("compact", "archive records of resolved markets");
  TimestampMs before = 0;
  std::string archive_path;
  compact->add_option("--before", before, "archive records older than this (epoch ms)")->required();
  compact->add_option("--archive", archive_path, "archive file (line-delimited JSON)")->required();

  auto* check = app.add_subcommand("check-config", "validate and print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    auto values = ConfigValues::defaults();
    if (!config_path.empty()) values.merge_file(config_path);
    values.merge_env();
    for (const auto& key : config_keys()) {
      const std::string name(key.name);
      if (app.get_option("--" + flag_name(key.name))->count() > 0) values.set(name, flag_values[name]);
    }
    const auto config = parse_config(values);
    Log::set_threshold(log_level_from(config.log_level));

    if (*check) {
      (void)load_persona_pool(config.persona_pool_path);
      std::cout << describe_config(values);
      return kExitOk;
    }

    if (*run) {
      SignalStopper stopper;
      Engine engine(config);
      stopper.watch(engine);
      std::unique_ptr<Server> server;
      if (serve) {
        ServerConfig sc;
        sc.listen_addr = config.listen_addr;
        sc.tokens = config.api_tokens;
        sc.open_read = config.open_read;
        sc.ws_buffer_frames = config.ws_buffer_frames;
        server = std::make_unique<Server>(sc, engine, engine.broadcaster(), engine.clock());
        server->start();
        Log::info("listening on port " + std::to_string(server->port()));
      }
      std::ofstream report_file;
      if (!report_out.empty()) {
        report_file.open(report_out, std::ios::trunc);
        if (!report_file) throw ConfigError("cannot write " + report_out);
      }
      engine.run_loop(max_cycles, [&](const ScanCycleReport& r) {
        const auto line = Json(r).dump();
        if (!quiet) std::cout << line << std::endl;
        if (report_file) report_file << line << std::endl;
      });
      if (server) server->stop();
      return kExitOk;
    }

    if (*evaluate) {
      Store store(config.db_path);
      const auto src = forecast_source_from_string(source);
      auto report = evaluate_forecasts(forecasts_from_store(store, src, from_ts, to_ts), src, bins);
      std::cout << Json(report).dump(2) << std::endl;
      if (!csv_out.empty() && report.calibration) {
        std::ofstream csv(csv_out);
        csv << calibration_csv(*report.calibration);
      }
      return kExitOk;
    }

    if (*exporter) {
      Store store(config.db_path);
      std::ofstream file;
      std::ostream* out = &std::cout;
      if (!out_path.empty()) {
        file.open(out_path, std::ios::trunc);
        if (!file) throw ConfigError("cannot write " + out_path);
        out = &file;
      }
      if (table == "all") {
        for (auto t : kAllTables) store.export_table(t, *out);
      } else {
        store.export_table(table_from_string(table), *out);
      }
      return kExitOk;
    }

    if (*replay) {
      Store store(config.db_path);
      const auto ledger = replay_ledger(store, config.risk.bankroll_usdc, store_opened_at(store), from_seq);
      const auto risk = replay_risk_state(store);
      const auto control =
          fold_control_commands(store.query(Table::commands), initial_control(config), config.agents_per_market);
      Json counts = Json::object();
      for (auto t : kAllTables) counts[std::string(to_string(t))] = store.count(t);
      Json out{{"last_seq", store.last_seq()},
               {"records", counts},
               {"ledger", ledger->summary()},
               {"risk_state", risk ? Json(*risk) : Json(nullptr)},
               {"control", control}};
      std::cout << out.dump(2) << std::endl;
      return kExitOk;
    }

    if (*compact) {
      Store store(config.db_path);
      std::ofstream archive(archive_path, std::ios::app);
      if (!archive) throw ConfigError("cannot write " + archive_path);
      const auto moved = store.compact(before, archive);
      std::cout << Json{{"archived", moved}}.dump() << std::endl;
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << std::endl;
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitFailure;
  }
  return kExitOk;
}
