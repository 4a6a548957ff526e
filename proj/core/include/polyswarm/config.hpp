#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "polyswarm/aggregation.hpp"
#include "polyswarm/analysis.hpp"
#include "polyswarm/execution.hpp"
#include "polyswarm/marketdata.hpp"
#include "polyswarm/risk.hpp"
#include "polyswarm/swarm.hpp"

namespace polyswarm {

struct ConfigKey {
  std::string_view name;           // env spelling, e.g. MIN_EV
  std::string_view default_value;  // empty means unset
  std::string_view help;
  bool secret = false;
};

// Every recognized key in display order.
const std::vector<ConfigKey>& config_keys();
const ConfigKey* find_config_key(std::string_view name);

// MIN_EV -> min-ev
std::string flag_name(std::string_view key);

// Raw key=value layers. Later layers override earlier ones.
class ConfigValues {
 public:
  static ConfigValues defaults();

  // Flat file: `KEY = value` lines; `#` and `;` start comments; blank lines
  // and `[section]` headers are ignored; values may be double-quoted. Keys
  // are case-insensitive and may use dashes. Unknown keys throw ConfigError.
  void merge_file(const std::string& path);
  // Every recognized key present in the environment.
  void merge_env();
  void set(std::string_view key, std::string value);

  std::optional<std::string> get(std::string_view key) const;
  const std::map<std::string, std::string, std::less<>>& all() const { return values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

// Comma separated `name:token` entries, or a single bare token whose
// operator name is "operator".
struct ApiTokens {
  std::map<std::string, std::string> token_to_identity;
  bool empty() const { return token_to_identity.empty(); }
};

ApiTokens parse_api_tokens(const std::string& spec);

struct AppConfig {
  MarketSource market_source;
  MarketFilter filter;
  double scan_interval_secs = 5.0;
  std::size_t max_markets_per_cycle = 50;

  std::size_t agents_per_market = 25;
  std::size_t max_in_flight = 16;
  double cache_ttl_secs = 300.0;
  std::string persona_pool_path;
  std::string provider = "simulated";
  SimulatedProviderConfig simulated;
  std::uint64_t seed = 42;

  GateConfig gates;
  NegationConfig negation;
  double partition_deviation_threshold = 0.02;
  std::string partition_groups_path;
  double js_priority_threshold = 0.02;
  bool execute_structural = false;

  std::string cex_quote_source;
  double cex_poll_interval_secs = 1.0;
  double latency_threshold = 0.10;
  std::string strike_map_path;
  double vol_window_hours = 24.0;
  bool allow_degenerate_vol = false;

  RiskConfig risk;

  TradingMode trading_mode = TradingMode::paper;
  bool live_trading_enabled = false;
  ExecutionCosts costs;
  std::string clob_url;
  std::string clob_api_key;

  std::string db_path = "polyswarm.db";
  std::string trade_log_path = "trades.jsonl";
  std::string resolutions_path;
  std::size_t storage_buffer_records = 10000;

  std::string listen_addr = "127.0.0.1:8080";
  ApiTokens api_tokens;
  bool open_read = false;
  std::size_t ws_buffer_frames = 1024;

  // "system" stamps records with wall time; "replay" starts at the fixture's
  // first observed_at and advances one interval per cycle.
  std::string clock = "system";
  std::string log_level = "info";
};

// Typed view of the merged values. Throws ConfigError with the offending key.
AppConfig parse_config(const ConfigValues& values);

// `KEY value` lines for every key, secrets masked.
std::string describe_config(const ConfigValues& values);

// Built-in persona file location (source tree or install prefix).
std::string default_persona_pool_path();

}  // namespace polyswarm
