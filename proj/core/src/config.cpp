#include "polyswarm/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "polyswarm/errors.hpp"

namespace polyswarm {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"MARKET_SOURCE", "https://gamma-api.polymarket.com", "market API base URL or fixture:<path>"},
      {"PRICE_BASIS", "mid", "mid or last"},
      {"MARKET_FETCH_LIMIT", "500", "markets requested per fetch"},
      {"POLL_TIMEOUT_SECS", "5", "market fetch timeout"},
      {"MIN_VOLUME_USDC", "1000", "minimum trailing-24h (else total) volume"},
      {"MIN_LIQUIDITY_USDC", "0", "minimum liquidity"},
      {"MAX_HOURS_TO_EXPIRY", "", "skip markets expiring later; empty = unbounded"},
      {"CATEGORIES", "", "comma separated category allow-list; empty = all"},
      {"SCAN_INTERVAL_SECS", "5", "scan cycle period"},
      {"MAX_MARKETS_PER_CYCLE", "50", "evaluation budget per cycle, highest volume first"},
      {"AGENTS_PER_MARKET", "25", "personas sampled per market"},
      {"MAX_IN_FLIGHT", "16", "global bound on concurrent provider calls"},
      {"CACHE_TTL_SECS", "300", "agent response cache lifetime"},
      {"PERSONA_POOL_PATH", "", "persona file; empty = built-in pool"},
      {"PROVIDER", "simulated", "simulated, or NAME for PROVIDER_<NAME>_URL/_KEY/_MODEL"},
      {"SEED", "42", "base seed for sampling and the simulated provider"},
      {"SIM_NOISE_SIGMA", "0.8", "simulated agent logit noise"},
      {"SIM_BIAS_SIGMA", "0.3", "simulated per-persona logit bias spread"},
      {"SIM_LATENCY_MS", "0", "simulated provider latency"},
      {"MIN_EV", "0.05", "minimum expected value per unit stake"},
      {"MAX_STDDEV", "0.30", "maximum swarm standard deviation"},
      {"WEIGHT_SWARM", "0.70", "swarm weight in the market mixture"},
      {"MIN_AGENTS", "5", "minimum successful agents per market"},
      {"NEGATION_DEVIATION_THRESHOLD", "0.02", "negation pair |sum - 1| threshold"},
      {"NEGATION_MATCH_THRESHOLD", "0.6", "negation title match score threshold"},
      {"PARTITION_DEVIATION_THRESHOLD", "0.02", "partition group |sum - 1| threshold"},
      {"PARTITION_GROUPS_PATH", "", "JSON object event -> member market ids"},
      {"JS_PRIORITY_THRESHOLD", "0.02", "JS divergence (nats) for divergence signals"},
      {"EXECUTE_STRUCTURAL", "false", "trade negation/partition/latency signals"},
      {"CEX_QUOTE_SOURCE", "", "quote URL template with {symbol}, or replay:<path>"},
      {"CEX_POLL_INTERVAL_SECS", "1", "CEX quote poll period"},
      {"LATENCY_THRESHOLD", "0.10", "|p_cex - p_market| threshold"},
      {"STRIKE_MAP_PATH", "", "JSON object market_id -> {symbol, strike, direction}"},
      {"VOL_WINDOW_HOURS", "24", "realized volatility window"},
      {"ALLOW_DEGENERATE_VOL", "false", "zero volatility yields the 0/1 limit"},
      {"KELLY_FRACTION", "0.25", "fractional Kelly multiplier"},
      {"MAX_POSITION_USDC", "10", "hard cap per position"},
      {"DAILY_LOSS_LIMIT_USDC", "50", "realized daily loss that suspends trading"},
      {"BANKROLL_USDC", "1000", "starting bankroll"},
      {"TRADING_MODE", "paper", "paper or live"},
      {"LIVE_TRADING_ENABLED", "false", "config key of the two-key live arming"},
      {"FEE_BPS", "0", "paper fill fee"},
      {"SLIPPAGE_BPS", "0", "paper fill slippage"},
      {"CLOB_URL", "", "order endpoint base URL for live mode"},
      {"POLY_API_KEY", "", "order endpoint credential", true},
      {"DB_PATH", "polyswarm.db", "SQLite store"},
      {"TRADE_LOG_PATH", "trades.jsonl", "append-only trade log"},
      {"RESOLUTIONS_PATH", "", "JSONL {market_id, outcome, resolved_at?} resolutions polled each cycle"},
      {"STORAGE_BUFFER_RECORDS", "10000", "records buffered while storage is down"},
      {"LISTEN_ADDR", "127.0.0.1:8080", "REST/WebSocket listen address"},
      {"API_TOKEN", "", "token or name:token,...", true},
      {"OPEN_READ", "false", "allow GET endpoints without a token"},
      {"WS_BUFFER_FRAMES", "1024", "per-client frame buffer before disconnect"},
      {"CLOCK", "system", "system or replay"},
      {"LOG_LEVEL", "info", "debug, info, warn, error"},
  };
  return keys;
}

namespace {

std::string normalize_key(std::string_view key) {
  std::string out;
  for (char c : key) out.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const ConfigKey* find_config_key(std::string_view name) {
  const auto norm = normalize_key(name);
  for (const auto& k : config_keys()) {
    if (k.name == norm) return &k;
  }
  return nullptr;
}

std::string flag_name(std::string_view key) {
  std::string out;
  for (char c : key) out.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

ConfigValues ConfigValues::defaults() {
  ConfigValues v;
  for (const auto& k : config_keys()) v.values_[std::string(k.name)] = std::string(k.default_value);
  return v;
}

void ConfigValues::set(std::string_view key, std::string value) {
  const auto* k = find_config_key(key);
  if (!k) throw ConfigError("unknown config key: " + std::string(key));
  values_[std::string(k->name)] = std::move(value);
}

void ConfigValues::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto text = trim(line);
    if (text.empty() || text[0] == '#' || text[0] == ';' || text[0] == '[') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected KEY = value");
    }
    auto key = trim(std::string_view(text).substr(0, eq));
    auto value = trim(std::string_view(text).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    } else {
      const auto hash = value.find(" #");
      if (hash != std::string::npos) value = trim(std::string_view(value).substr(0, hash));
    }
    if (!find_config_key(key)) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": unknown key " + key);
    }
    set(key, value);
  }
}

void ConfigValues::merge_env() {
  for (const auto& k : config_keys()) {
    if (const char* v = std::getenv(std::string(k.name).c_str())) values_[std::string(k.name)] = v;
  }
}

std::optional<std::string> ConfigValues::get(std::string_view key) const {
  auto it = values_.find(normalize_key(key));
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

ApiTokens parse_api_tokens(const std::string& spec) {
  ApiTokens tokens;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      tokens.token_to_identity[item] = "operator";
    } else {
      auto name = trim(std::string_view(item).substr(0, colon));
      auto token = trim(std::string_view(item).substr(colon + 1));
      if (name.empty() || token.empty()) throw ConfigError("API_TOKEN: malformed entry");
      tokens.token_to_identity[token] = name;
    }
  }
  return tokens;
}

namespace {

class Reader {
 public:
  explicit Reader(const ConfigValues& values) : values_(values) {}

  std::string str(std::string_view key) const { return values_.get(key).value_or(""); }

  double real(std::string_view key) const {
    const auto s = str(key);
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(std::string(key) + ": expected a number, got '" + s + "'");
    }
  }

  double nonneg(std::string_view key) const {
    const double v = real(key);
    if (v < 0) throw ConfigError(std::string(key) + " must be >= 0");
    return v;
  }

  double positive(std::string_view key) const {
    const double v = real(key);
    if (v <= 0) throw ConfigError(std::string(key) + " must be > 0");
    return v;
  }

  std::optional<double> optional_positive(std::string_view key) const {
    if (str(key).empty()) return std::nullopt;
    return positive(key);
  }

  std::size_t count(std::string_view key, std::size_t min = 1) const {
    const auto s = str(key);
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(s, &pos);
      if (pos != s.size() || v < static_cast<long long>(min)) throw std::invalid_argument("range");
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string(key) + ": expected an integer >= " + std::to_string(min) + ", got '" + s + "'");
    }
  }

  bool flag(std::string_view key) const {
    std::string s = str(key);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off" || s.empty()) return false;
    throw ConfigError(std::string(key) + ": expected a boolean, got '" + s + "'");
  }

 private:
  const ConfigValues& values_;
};

std::chrono::milliseconds seconds_to_ms(double secs) {
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(secs * 1000.0)));
}

}  // namespace

AppConfig parse_config(const ConfigValues& values) {
  const Reader r(values);
  AppConfig c;

  c.market_source = MarketSource::parse(r.str("MARKET_SOURCE"));
  const auto basis = r.str("PRICE_BASIS");
  if (basis == "mid") {
    c.market_source.price_basis = PriceBasis::mid;
  } else if (basis == "last") {
    c.market_source.price_basis = PriceBasis::last;
  } else {
    throw ConfigError("PRICE_BASIS must be mid or last");
  }
  c.market_source.limit = static_cast<int>(r.count("MARKET_FETCH_LIMIT"));
  c.market_source.poll_timeout = seconds_to_ms(r.positive("POLL_TIMEOUT_SECS"));

  c.filter.min_volume_usdc = r.nonneg("MIN_VOLUME_USDC");
  c.filter.min_liquidity_usdc = r.nonneg("MIN_LIQUIDITY_USDC");
  c.filter.max_hours_to_expiry = r.optional_positive("MAX_HOURS_TO_EXPIRY");
  if (const auto cats = r.str("CATEGORIES"); !cats.empty()) {
    std::set<Category> set;
    std::stringstream ss(cats);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      const auto cat = category_from_string(item);
      if (to_string(cat) != item) throw ConfigError("CATEGORIES: unknown category " + item);
      set.insert(cat);
    }
    c.filter.categories = std::move(set);
  }
  c.scan_interval_secs = r.positive("SCAN_INTERVAL_SECS");
  c.max_markets_per_cycle = r.count("MAX_MARKETS_PER_CYCLE");

  c.agents_per_market = r.count("AGENTS_PER_MARKET");
  if (c.agents_per_market > kPersonaPoolSize) {
    throw ConfigError("AGENTS_PER_MARKET cannot exceed the persona pool size");
  }
  c.max_in_flight = r.count("MAX_IN_FLIGHT");
  c.cache_ttl_secs = r.nonneg("CACHE_TTL_SECS");
  c.persona_pool_path = r.str("PERSONA_POOL_PATH");
  if (c.persona_pool_path.empty()) c.persona_pool_path = default_persona_pool_path();
  c.provider = r.str("PROVIDER");
  if (c.provider.empty()) throw ConfigError("PROVIDER must not be empty");
  c.seed = static_cast<std::uint64_t>(r.count("SEED", 0));
  c.simulated.seed = c.seed;
  c.simulated.noise_sigma = r.nonneg("SIM_NOISE_SIGMA");
  c.simulated.persona_bias_sigma = r.nonneg("SIM_BIAS_SIGMA");
  c.simulated.latency = std::chrono::microseconds(static_cast<std::int64_t>(r.nonneg("SIM_LATENCY_MS") * 1000.0));

  c.gates.min_ev = r.real("MIN_EV");
  c.gates.max_std_dev = r.real("MAX_STDDEV");
  c.gates.weight_swarm = r.real("WEIGHT_SWARM");
  c.gates.min_agents = r.count("MIN_AGENTS");
  c.gates.validate();
  if (c.gates.min_agents > c.agents_per_market) throw ConfigError("MIN_AGENTS exceeds AGENTS_PER_MARKET");

  c.negation.deviation_threshold = r.nonneg("NEGATION_DEVIATION_THRESHOLD");
  c.negation.min_match_score = r.nonneg("NEGATION_MATCH_THRESHOLD");
  if (c.negation.min_match_score > 1.0) throw ConfigError("NEGATION_MATCH_THRESHOLD must be <= 1");
  c.partition_deviation_threshold = r.nonneg("PARTITION_DEVIATION_THRESHOLD");
  c.partition_groups_path = r.str("PARTITION_GROUPS_PATH");
  c.js_priority_threshold = r.nonneg("JS_PRIORITY_THRESHOLD");
  c.execute_structural = r.flag("EXECUTE_STRUCTURAL");

  c.cex_quote_source = r.str("CEX_QUOTE_SOURCE");
  c.cex_poll_interval_secs = r.positive("CEX_POLL_INTERVAL_SECS");
  c.latency_threshold = r.nonneg("LATENCY_THRESHOLD");
  c.strike_map_path = r.str("STRIKE_MAP_PATH");
  c.vol_window_hours = r.positive("VOL_WINDOW_HOURS");
  c.allow_degenerate_vol = r.flag("ALLOW_DEGENERATE_VOL");

  c.risk.kelly_multiplier = r.real("KELLY_FRACTION");
  c.risk.max_position_usdc = r.real("MAX_POSITION_USDC");
  c.risk.daily_loss_limit_usdc = r.real("DAILY_LOSS_LIMIT_USDC");
  c.risk.bankroll_usdc = r.real("BANKROLL_USDC");
  c.risk.validate();

  try {
    c.trading_mode = trading_mode_from_string(r.str("TRADING_MODE"));
  } catch (const std::exception&) {
    throw ConfigError("TRADING_MODE must be paper or live");
  }
  c.live_trading_enabled = r.flag("LIVE_TRADING_ENABLED");
  c.costs.fee_bps = r.nonneg("FEE_BPS");
  c.costs.slippage_bps = r.nonneg("SLIPPAGE_BPS");
  c.clob_url = r.str("CLOB_URL");
  c.clob_api_key = r.str("POLY_API_KEY");
  if (c.trading_mode == TradingMode::live && c.clob_url.empty()) {
    throw ConfigError("TRADING_MODE=live requires CLOB_URL");
  }

  c.db_path = r.str("DB_PATH");
  if (c.db_path.empty()) throw ConfigError("DB_PATH must not be empty");
  c.trade_log_path = r.str("TRADE_LOG_PATH");
  c.resolutions_path = r.str("RESOLUTIONS_PATH");
  c.storage_buffer_records = r.count("STORAGE_BUFFER_RECORDS", 0);

  c.listen_addr = r.str("LISTEN_ADDR");
  if (c.listen_addr.find(':') == std::string::npos) throw ConfigError("LISTEN_ADDR must be host:port");
  c.api_tokens = parse_api_tokens(r.str("API_TOKEN"));
  c.open_read = r.flag("OPEN_READ");
  c.ws_buffer_frames = r.count("WS_BUFFER_FRAMES");

  c.clock = r.str("CLOCK");
  if (c.clock != "system" && c.clock != "replay") throw ConfigError("CLOCK must be system or replay");
  c.log_level = r.str("LOG_LEVEL");
  return c;
}

std::string describe_config(const ConfigValues& values) {
  std::ostringstream out;
  for (const auto& k : config_keys()) {
    auto v = values.get(k.name).value_or("");
    if (k.secret && !v.empty()) v = "********";
    if (k.name == "PERSONA_POOL_PATH" && v.empty()) v = default_persona_pool_path();
    out << k.name << ' ' << v << '\n';
  }
  return out.str();
}

std::string default_persona_pool_path() {
  namespace fs = std::filesystem;
  if (fs::exists(POLYSWARM_DEFAULT_PERSONA_FILE)) return POLYSWARM_DEFAULT_PERSONA_FILE;
  return POLYSWARM_INSTALLED_PERSONA_FILE;
}

}  // namespace polyswarm
