#include "polyswarm/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "polyswarm/errors.hpp"
#include "polyswarm/hashing.hpp"
#include "polyswarm/log.hpp"

namespace polyswarm {

// ---------------------------------------------------------------- reports

void to_json(Json& j, const ScanCycleReport& r) {
  j = Json{{"cycle_id", r.cycle_id},
           {"started_at", r.started_at},
           {"markets_fetched", r.markets_fetched},
           {"markets_filtered", r.markets_filtered},
           {"markets_evaluated", r.markets_evaluated},
           {"signals_emitted", r.signals_emitted},
           {"trades_executed", r.trades_executed},
           {"duration_ms", r.duration_ms},
           {"provider_calls", r.provider_calls},
           {"cache_hits", r.cache_hits},
           {"skipped", r.skipped ? Json(*r.skipped) : Json(nullptr)}};
}

void from_json(const Json& j, ScanCycleReport& r) {
  r.cycle_id = j.at("cycle_id").get<std::uint64_t>();
  r.started_at = j.at("started_at").get<TimestampMs>();
  r.markets_fetched = j.at("markets_fetched").get<std::size_t>();
  r.markets_filtered = j.at("markets_filtered").get<std::size_t>();
  r.markets_evaluated = j.at("markets_evaluated").get<std::size_t>();
  r.signals_emitted = j.at("signals_emitted").get<std::size_t>();
  r.trades_executed = j.at("trades_executed").get<std::size_t>();
  r.duration_ms = j.at("duration_ms").get<std::int64_t>();
  r.provider_calls = j.at("provider_calls").get<std::size_t>();
  r.cache_hits = j.at("cache_hits").get<std::size_t>();
  r.skipped.reset();
  if (j.contains("skipped") && !j.at("skipped").is_null()) r.skipped = j.at("skipped").get<std::string>();
}

// ---------------------------------------------------------------- control

void to_json(Json& j, const ControlSnapshot& c) {
  j = Json{{"scanning", c.paused ? "paused" : "running"},
           {"mode", to_string(c.mode)},
           {"armed", c.armed},
           {"thresholds",
            {{"min_ev", c.gates.min_ev},
             {"max_stddev", c.gates.max_std_dev},
             {"weight_swarm", c.gates.weight_swarm},
             {"min_agents", c.gates.min_agents},
             {"kelly_fraction", c.risk.kelly_multiplier},
             {"max_position_usdc", c.risk.max_position_usdc},
             {"daily_loss_limit_usdc", c.risk.daily_loss_limit_usdc},
             {"negation_deviation_threshold", c.negation_deviation_threshold},
             {"partition_deviation_threshold", c.partition_deviation_threshold},
             {"js_priority_threshold", c.js_priority_threshold},
             {"latency_threshold", c.latency_threshold}}}};
}

ControlSnapshot initial_control(const AppConfig& config) {
  ControlSnapshot c;
  c.mode = config.trading_mode;
  c.gates = config.gates;
  c.risk = config.risk;
  c.negation_deviation_threshold = config.negation.deviation_threshold;
  c.partition_deviation_threshold = config.partition_deviation_threshold;
  c.js_priority_threshold = config.js_priority_threshold;
  c.latency_threshold = config.latency_threshold;
  return c;
}

const std::vector<std::string>& threshold_names() {
  static const std::vector<std::string> names{"min_ev",
                                              "max_stddev",
                                              "weight_swarm",
                                              "min_agents",
                                              "kelly_fraction",
                                              "max_position_usdc",
                                              "daily_loss_limit_usdc",
                                              "negation_deviation_threshold",
                                              "partition_deviation_threshold",
                                              "js_priority_threshold",
                                              "latency_threshold"};
  return names;
}

ControlSnapshot with_threshold(ControlSnapshot c, const std::string& name, double value,
                               std::size_t agents_per_market) {
  if (!std::isfinite(value)) throw ValidationError(name + " must be finite");
  const auto require = [&](bool ok, const char* rule) {
    if (!ok) throw ValidationError(name + " must be " + rule);
  };
  if (name == "min_ev") {
    require(value >= 0.0, ">= 0");
    c.gates.min_ev = value;
  } else if (name == "max_stddev") {
    require(value > 0.0 && value <= 0.5, "in (0, 0.5]");
    c.gates.max_std_dev = value;
  } else if (name == "weight_swarm") {
    require(value >= 0.0 && value <= 1.0, "in [0, 1]");
    c.gates.weight_swarm = value;
  } else if (name == "min_agents") {
    require(value >= 1.0 && value == std::floor(value) && value <= static_cast<double>(agents_per_market),
            "an integer between 1 and AGENTS_PER_MARKET");
    c.gates.min_agents = static_cast<std::size_t>(value);
  } else if (name == "kelly_fraction") {
    require(value > 0.0 && value <= 1.0, "in (0, 1]");
    c.risk.kelly_multiplier = value;
  } else if (name == "max_position_usdc") {
    require(value > 0.0, "> 0");
    c.risk.max_position_usdc = value;
  } else if (name == "daily_loss_limit_usdc") {
    require(value > 0.0, "> 0");
    c.risk.daily_loss_limit_usdc = value;
  } else if (name == "negation_deviation_threshold") {
    require(value >= 0.0 && value < 1.0, "in [0, 1)");
    c.negation_deviation_threshold = value;
  } else if (name == "partition_deviation_threshold") {
    require(value >= 0.0 && value < 1.0, "in [0, 1)");
    c.partition_deviation_threshold = value;
  } else if (name == "js_priority_threshold") {
    require(value >= 0.0 && value <= std::log(2.0), "in [0, ln 2]");
    c.js_priority_threshold = value;
  } else if (name == "latency_threshold") {
    require(value >= 0.0 && value < 1.0, "in [0, 1)");
    c.latency_threshold = value;
  } else {
    throw ValidationError("unknown threshold: " + name);
  }
  return c;
}

ControlSnapshot fold_control_commands(const std::vector<StoredRecord>& commands, ControlSnapshot c,
                                      std::size_t agents_per_market) {
  for (const auto& rec : commands) {
    const auto cmd = rec.payload.get<ControlCommand>();
    switch (cmd.kind) {
      case CommandKind::pause: c.paused = true; break;
      case CommandKind::resume: c.paused = false; break;
      case CommandKind::set_mode:
        c.mode = cmd.mode.value_or(c.mode);
        c.armed = false;
        break;
      case CommandKind::set_threshold:
        try {
          c = with_threshold(c, cmd.name.value_or(""), cmd.value.value_or(NAN), agents_per_market);
        } catch (const ValidationError& e) {
          Log::warn(std::string("replay: ignoring persisted threshold: ") + e.what());
        }
        break;
      default: break;
    }
  }
  c.armed = false;
  return c;
}

TimestampMs store_opened_at(const Store& store) {
  const auto rows = store.query(Table::risk_days);
  return rows.empty() ? 0 : rows.front().ts;
}

// ---------------------------------------------------------------- evaluation

void to_json(Json& j, const EvaluationReport& r) {
  j = Json{{"source", to_string(r.source)},
           {"n", r.records.size()},
           {"brier", r.brier ? Json(*r.brier) : Json(nullptr)},
           {"log_loss", r.log_loss ? Json(*r.log_loss) : Json(nullptr)},
           {"reference", {{"uninformed_brier", 0.25}, {"expert_brier_range", {0.10, 0.18}}}}};
  j["calibration"] = r.calibration ? Json(*r.calibration) : Json(nullptr);
  Json agents = Json::object();
  for (const auto& [id, s] : r.per_agent) agents[id] = {{"brier", s.brier}, {"log_loss", s.log_loss}, {"n", s.n}};
  j["per_agent"] = agents;
}

std::vector<Resolution> resolutions_from_store(const Store& store) {
  struct Item {
    std::int64_t seq;
    Resolution r;
  };
  std::vector<Item> items;
  for (const auto& rec : store.query(Table::commands)) {
    const auto cmd = rec.payload.get<ControlCommand>();
    if (cmd.kind == CommandKind::resolve_market && cmd.market_id && cmd.outcome) {
      items.push_back({rec.seq, {*cmd.market_id, *cmd.outcome, cmd.issued_at}});
    }
  }
  for (const auto& rec : store.query(Table::trades)) {
    const auto ev = rec.payload.get<LedgerEvent>();
    if (ev.type != LedgerEvent::Type::settle) continue;
    const bool won = ev.trade.status == TradeStatus::resolved_win;
    const bool yes_side = ev.trade.order.side == Side::buy_yes;
    items.push_back({rec.seq, {ev.trade.order.market_id, won == yes_side ? Outcome::yes : Outcome::no, ev.at}});
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.seq < b.seq; });
  std::vector<Resolution> out;
  std::set<std::string> seen;
  for (auto& it : items) {
    if (seen.insert(it.r.market_id).second) out.push_back(std::move(it.r));
  }
  return out;
}

namespace {

double pick_forecast(const SwarmConsensus& c, ForecastSource source) {
  switch (source) {
    case ForecastSource::swarm: return c.p_swarm.value();
    case ForecastSource::market: return c.p_market.value();
    default: return c.p_combined.value();
  }
}

int outcome_value(Outcome o) { return o == Outcome::yes ? 1 : 0; }

}  // namespace

std::vector<ForecastRecord> forecasts_from_store(const Store& store, ForecastSource source,
                                                 std::optional<TimestampMs> from, std::optional<TimestampMs> to) {
  std::map<std::string, Resolution> resolved;
  for (auto& r : resolutions_from_store(store)) {
    if (from && r.resolved_at < *from) continue;
    if (to && r.resolved_at > *to) continue;
    resolved.emplace(r.market_id, r);
  }
  std::vector<ForecastRecord> out;
  if (source == ForecastSource::agent) {
    std::map<std::pair<std::string, std::string>, AgentPrediction> latest;
    for (const auto& rec : store.query(Table::predictions)) {
      auto it = resolved.find(rec.market_id);
      if (it == resolved.end()) continue;
      auto p = rec.payload.get<AgentPrediction>();
      if (p.created_at >= it->second.resolved_at) continue;
      latest.insert_or_assign({p.market_id, p.persona_id}, std::move(p));
    }
    for (const auto& [key, p] : latest) {
      out.push_back({key.first, p.probability, outcome_value(resolved.at(key.first).outcome), source, key.second});
    }
    return out;
  }
  std::map<std::string, SwarmConsensus> latest;
  for (const auto& rec : store.query(Table::consensus)) {
    auto it = resolved.find(rec.market_id);
    if (it == resolved.end()) continue;
    auto c = rec.payload.get<ConsensusRecord>().consensus;
    if (c.decided_at >= it->second.resolved_at) continue;
    latest.insert_or_assign(c.market_id, std::move(c));
  }
  for (const auto& [id, c] : latest) {
    out.push_back({id, Probability(pick_forecast(c, source)), outcome_value(resolved.at(id).outcome), source, {}});
  }
  return out;
}

EvaluationReport evaluate_forecasts(std::vector<ForecastRecord> records, ForecastSource source, std::size_t n_bins) {
  EvaluationReport r;
  r.source = source;
  r.records = std::move(records);
  if (r.records.empty()) return r;
  r.brier = brier_score(r.records);
  r.log_loss = log_loss(r.records);
  r.calibration = reliability_bins(r.records, n_bins);
  if (source == ForecastSource::agent) r.per_agent = per_agent_scores(r.records);
  return r;
}

// ---------------------------------------------------------------- engine

namespace {

constexpr std::size_t kSignalsKept = 500;
constexpr std::size_t kForecastHistory = 16;

std::unique_ptr<InferenceProvider> build_provider(const AppConfig& config, std::shared_ptr<HttpClient> http,
                                                  SimulatedProvider::TruthLookup lookup) {
  if (config.provider == "simulated") return std::make_unique<SimulatedProvider>(config.simulated, std::move(lookup));
  auto remote = remote_provider_from_env(config.provider);
  if (remote.url.empty()) throw ConfigError("provider " + config.provider + " has no URL configured");
  return std::make_unique<RemoteHttpProvider>(std::move(remote), std::move(http));
}

std::vector<std::string> strike_symbols(const std::map<std::string, StrikeContract>& map) {
  std::set<std::string> symbols;
  for (const auto& [id, c] : map) symbols.insert(c.symbol);
  return {symbols.begin(), symbols.end()};
}

template <typename F>
auto config_step(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

}  // namespace

Engine::Engine(AppConfig config, EngineOverrides overrides)
    : config_(std::move(config)),
      replay_clock_(!overrides.clock && config_.clock == "replay" ? std::make_unique<ManualClock>() : nullptr),
      clock_(overrides.clock ? overrides.clock
                     : replay_clock_ ? static_cast<const Clock*>(replay_clock_.get())
                                     : &system_clock_),
      broadcaster_(*clock_) {
  personas_ = config_step("persona pool", [&] { return load_persona_pool(config_.persona_pool_path); });
  http_ = overrides.http ? overrides.http : make_http_client();

  feed_ = overrides.feed ? std::move(overrides.feed) : make_market_feed(config_.market_source, *clock_, http_);
  if (replay_clock_) {
    if (auto* fixture = dynamic_cast<FixtureMarketFeed*>(feed_.get())) replay_clock_->set(fixture->first_observed_at());
  }

  provider_ = overrides.provider ? std::move(overrides.provider)
                                 : build_provider(config_, http_, [this](const std::string& id) -> std::optional<double> {
                                     std::lock_guard lock(truth_mu_);
                                     auto it = sim_truth_.find(id);
                                     if (it == sim_truth_.end()) return std::nullopt;
                                     return it->second;
                                   });
  cache_ = std::make_unique<ResponseCache>(
      std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(config_.cache_ttl_secs * 1000.0))));
  executor_ = std::make_unique<InferenceExecutor>(config_.max_in_flight);
  evaluator_ = std::make_unique<SwarmEvaluator>(*provider_, *cache_, *executor_, *clock_);

  if (overrides.order_client) {
    order_client_ = std::move(overrides.order_client);
  } else if (!config_.clob_url.empty()) {
    order_client_ = std::make_unique<HttpOrderClient>(config_.clob_url, config_.clob_api_key, http_);
  }
  if (order_client_) live_executor_ = std::make_unique<LiveExecutor>(*order_client_);

  if (!config_.strike_map_path.empty()) {
    strike_map_ = config_step("strike map", [&] { return load_strike_map(config_.strike_map_path); });
  }
  if (!config_.partition_groups_path.empty()) {
    partition_groups_ = config_step("partition groups", [&] { return load_partition_groups(config_.partition_groups_path); });
  }
  if (overrides.quotes) {
    quotes_ = std::move(overrides.quotes);
  } else if (config_.cex_quote_source.starts_with("replay:")) {
    quotes_ = config_step("quote replay", [&] { return std::make_unique<ReplayQuoteFeed>(config_.cex_quote_source.substr(7)); });
  } else if (!config_.cex_quote_source.empty()) {
    auto feed = std::make_unique<HttpQuoteFeed>(
        config_.cex_quote_source, strike_symbols(strike_map_), http_, *clock_,
        std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(config_.cex_poll_interval_secs * 1000.0))));
    feed->start();
    quotes_ = std::move(feed);
  }

  store_ = std::make_unique<Store>(config_.db_path);
  if (!config_.trade_log_path.empty()) trade_log_ = std::make_unique<TradeLogWriter>(config_.trade_log_path);
  control_ = initial_control(config_);
  restore_from_store();

  ledger_->set_listener([this](const LedgerEvent& e) {
    std::lock_guard lock(outbox_mu_);
    outbox_.push_back(e);
  });
  refresh_pnl_view();
  broadcaster_.set_snapshot_source([this] { return snapshot(); });
  log_sink_ = Log::add_sink([this](LogLevel level, const std::string& message) {
    broadcaster_.publish(EventKind::log_line, Json{{"level", to_string(level)}, {"message", message}});
  });
}

Engine::~Engine() {
  stop();
  if (log_sink_ >= 0) Log::remove_sink(log_sink_);
  broadcaster_.set_snapshot_source({});
  if (auto* http_quotes = dynamic_cast<HttpQuoteFeed*>(quotes_.get())) http_quotes->stop();
}

void Engine::restore_from_store() {
  const TimestampMs now = clock_->now();
  const auto risk_rows = store_->query(Table::risk_days);
  TimestampMs opened_at = now;
  if (risk_rows.empty()) {
    risk_ = initial_risk_state(config_.risk, now);
    store_->append(RiskRecord{risk_, "open", now});
  } else {
    opened_at = risk_rows.front().ts;
    risk_ = risk_rows.back().payload.get<RiskRecord>().state;
  }
  ledger_ = replay_ledger(*store_, config_.risk.bankroll_usdc, opened_at);

  const auto commands = store_->query(Table::commands);
  control_ = fold_control_commands(commands, control_, config_.agents_per_market);

  for (const auto& rec : store_->query(Table::consensus)) {
    cycle_id_ = std::max<std::uint64_t>(cycle_id_, rec.payload.at("cycle_id").get<std::uint64_t>());
  }
  for (const auto& r : resolutions_from_store(*store_)) resolved_markets_.insert(r.market_id);
  for (const auto& rec : commands) {
    auto cmd = rec.payload.get<ControlCommand>();
    if (cmd.kind == CommandKind::resolve_market && cmd.market_id && ledger_->has_open_position(*cmd.market_id)) {
      pending_.push_back(std::move(cmd));
    }
  }
  if (!risk_rows.empty() || !commands.empty()) {
    Log::info("restored state from " + config_.db_path + ": " + std::to_string(ledger_->trades().size()) +
              " trades, cycle " + std::to_string(cycle_id_));
  }
}

void Engine::persist(Table table, TimestampMs ts, const std::string& market_id, const std::string& source,
                     const Json& payload) {
  std::lock_guard lock(storage_mu_);
  const auto flush = [&] {
    while (!storage_buffer_.empty()) {
      const auto& w = storage_buffer_.front();
      store_->append(w.table, w.ts, w.market_id, w.source, w.payload);
      storage_buffer_.pop_front();
    }
  };
  try {
    flush();
    store_->append(table, ts, market_id, source, payload);
    if (storage_degraded_.exchange(false)) Log::info("storage recovered");
    return;
  } catch (const StorageError& e) {
    if (!storage_degraded_.exchange(true)) Log::error(std::string("storage unavailable, buffering writes: ") + e.what());
  }
  storage_buffer_.push_back({table, ts, market_id, source, payload});
  if (storage_buffer_.size() > config_.storage_buffer_records) {
    storage_buffer_.pop_front();
    bool newly = false;
    {
      std::lock_guard slock(state_mu_);
      if (!risk_.suspended) {
        risk_.suspended = true;
        risk_.suspended_at = ts;
        newly = true;
      }
    }
    if (newly) Log::error("storage buffer full; trading suspended");
  }
}

bool Engine::storage_degraded() const { return storage_degraded_.load(); }

RiskState Engine::risk_state() const {
  std::lock_guard lock(state_mu_);
  return risk_;
}

ControlSnapshot Engine::control() const {
  std::lock_guard lock(state_mu_);
  return control_;
}

std::size_t Engine::pending_commands() const {
  std::lock_guard lock(state_mu_);
  return pending_.size();
}

Json Engine::risk_view() const {
  ControlSnapshot c;
  RiskState r;
  std::size_t pending = 0;
  {
    std::lock_guard lock(state_mu_);
    c = control_;
    r = risk_;
    pending = pending_.size();
  }
  Json j = c;
  j["suspended"] = r.suspended;
  j["risk_state"] = r;
  j["live_trading_enabled"] = config_.live_trading_enabled;
  j["pending_commands"] = pending;
  j["storage_degraded"] = storage_degraded_.load();
  return j;
}

Json Engine::pnl_view() const { return Json(ledger_->summary()); }

void Engine::refresh_pnl_view() {
  Json pnl = pnl_view();
  std::lock_guard lock(view_mu_);
  pnl_cache_ = std::move(pnl);
}

void Engine::publish_risk() { broadcaster_.publish(EventKind::risk_state, risk_view()); }

std::optional<Json> Engine::view(std::string_view resource) const {
  if (resource == "markets") {
    std::lock_guard lock(view_mu_);
    return std::optional<Json>(markets_view_);
  }
  if (resource == "consensus") {
    std::lock_guard lock(view_mu_);
    Json arr = Json::array();
    for (const auto& [id, c] : consensus_view_) arr.push_back(c);
    return arr;
  }
  if (resource == "signals") {
    std::lock_guard lock(view_mu_);
    return Json(std::vector<Json>(signals_view_.begin(), signals_view_.end()));
  }
  if (resource == "trades") return Json(ledger_->trades());
  if (resource == "pnl") return pnl_view();
  if (resource == "agents") {
    Json latest = Json::object();
    {
      std::lock_guard lock(view_mu_);
      for (const auto& [id, preds] : agents_view_) latest[id] = preds;
    }
    return Json{{"personas", personas_}, {"latest", latest}};
  }
  if (resource == "risk") return risk_view();
  if (resource == "cycle") {
    std::lock_guard lock(view_mu_);
    return last_report_ ? Json(*last_report_) : Json(nullptr);
  }
  return std::nullopt;
}

Json Engine::snapshot() const {
  Json j;
  {
    std::lock_guard lock(view_mu_);
    j["markets"] = markets_view_;
    Json consensus = Json::array();
    for (const auto& [id, c] : consensus_view_) consensus.push_back(c);
    j["consensus"] = consensus;
    j["pnl"] = pnl_cache_;
    j["last_cycle"] = last_report_ ? Json(*last_report_) : Json(nullptr);
  }
  j["risk"] = risk_view();
  return j;
}

Json Engine::apply_command(const ControlCommand& command) {
  std::lock_guard cmd_lock(command_mu_);
  ControlSnapshot next;
  bool queue = false;
  {
    std::lock_guard lock(state_mu_);
    next = control_;
    switch (command.kind) {
      case CommandKind::pause: next.paused = true; break;
      case CommandKind::resume: next.paused = false; break;
      case CommandKind::set_mode:
        if (!command.mode) throw ValidationError("set_mode needs a mode");
        if (*command.mode == TradingMode::live && !live_executor_) {
          throw ValidationError("live trading is not configured (CLOB_URL is empty)");
        }
        next.mode = *command.mode;
        next.armed = false;
        break;
      case CommandKind::arm_live:
        if (control_.mode != TradingMode::live) throw ValidationError("arm_live requires set_mode(live) first");
        if (!config_.live_trading_enabled) throw ValidationError("arm_live requires LIVE_TRADING_ENABLED");
        next.armed = true;
        break;
      case CommandKind::disarm_live: next.armed = false; break;
      case CommandKind::set_threshold:
        next = with_threshold(next, command.name.value_or(""), command.value.value_or(NAN), config_.agents_per_market);
        break;
      case CommandKind::resume_after_loss_limit:
        if (!risk_.suspended) throw ValidationError("trading is not suspended");
        queue = true;
        break;
      case CommandKind::resolve_market:
        if (!command.market_id || command.market_id->empty() || !command.outcome) {
          throw ValidationError("resolve_market needs market_id and outcome");
        }
        queue = true;
        break;
    }
  }
  store_->append(command);
  {
    std::lock_guard lock(state_mu_);
    if (queue) {
      pending_.push_back(command);
    } else {
      control_ = next;
    }
  }
  Log::info("control: " + std::string(to_string(command.kind)) + " by " + command.issued_by);
  publish_risk();
  return risk_view();
}

void Engine::resolve_market(const std::string& market_id, Outcome outcome, TimestampMs at) {
  {
    std::lock_guard lock(eval_mu_);
    const bool fresh = std::none_of(resolutions_.begin(), resolutions_.end(),
                                    [&](const Resolution& r) { return r.market_id == market_id; });
    if (fresh) resolutions_.push_back({market_id, outcome, at});
    resolved_markets_.insert(market_id);
  }
  ledger_->resolve(market_id, outcome, clock_->now());
  drain_ledger_events();
}

void Engine::apply_pending(TimestampMs now) {
  poll_resolution_file(now);
  std::deque<ControlCommand> pending;
  {
    std::lock_guard lock(state_mu_);
    pending.swap(pending_);
  }
  for (const auto& cmd : pending) {
    if (cmd.kind == CommandKind::resolve_market) {
      resolve_market(*cmd.market_id, *cmd.outcome, cmd.issued_at);
    } else if (cmd.kind == CommandKind::resume_after_loss_limit) {
      RiskState state;
      {
        std::lock_guard lock(state_mu_);
        risk_ = operator_resume(risk_);
        state = risk_;
      }
      persist(Table::risk_days, now, "", "resume:" + cmd.issued_by, Json(RiskRecord{state, "resume:" + cmd.issued_by, now}));
      Log::warn("risk: trading resumed after loss limit by " + cmd.issued_by);
      publish_risk();
    }
  }
}

void Engine::poll_resolution_file(TimestampMs now) {
  if (config_.resolutions_path.empty()) return;
  std::ifstream in(config_.resolutions_path);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = Json::parse(line);
      const auto market_id = j.at("market_id").get<std::string>();
      // Entries stamped in the future take effect once the clock reaches them.
      if (j.contains("resolved_at") && timestamp_from_json(j.at("resolved_at")) > now) continue;
      {
        std::lock_guard lock(eval_mu_);
        if (resolved_markets_.contains(market_id)) continue;
      }
      ControlCommand cmd;
      cmd.kind = CommandKind::resolve_market;
      cmd.market_id = market_id;
      cmd.outcome = outcome_from_string(j.at("outcome").get<std::string>());
      cmd.issued_by = "resolution-poller";
      cmd.issued_at = j.contains("resolved_at") ? timestamp_from_json(j.at("resolved_at")) : now;
      persist(Table::commands, cmd.issued_at, market_id, "resolve_market", Json(cmd));
      resolve_market(market_id, *cmd.outcome, cmd.issued_at);
    } catch (const std::exception& e) {
      Log::warn(config_.resolutions_path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void Engine::drain_ledger_events() {
  std::vector<LedgerEvent> events;
  {
    std::lock_guard lock(outbox_mu_);
    events.swap(outbox_);
  }
  if (events.empty()) return;
  for (const auto& e : events) {
    persist(Table::trades, e.at, e.trade.order.market_id, std::string(to_string(e.type)), Json(e));
    if (trade_log_) trade_log_->append(e);
    broadcaster_.publish(EventKind::trade, Json(e));

    double delta = 0.0;
    if (e.type == LedgerEvent::Type::fill) delta = -e.trade.fee_usdc;
    if (e.type == LedgerEvent::Type::settle) delta = e.trade.realized_pnl_usdc;
    if (delta == 0.0) continue;
    RiskState state;
    bool newly_suspended = false;
    {
      std::lock_guard lock(state_mu_);
      const bool was = risk_.suspended;
      risk_ = record_fill_and_check(delta, risk_, control_.risk, e.at);
      newly_suspended = !was && risk_.suspended;
      state = risk_;
    }
    const std::string reason = newly_suspended ? "suspend" : std::string(to_string(e.type));
    persist(Table::risk_days, e.at, e.trade.order.market_id, reason, Json(RiskRecord{state, reason, e.at}));
    if (newly_suspended) {
      Log::warn("risk: daily loss limit reached (" + std::to_string(state.realized_pnl_today_usdc) +
                " USDC); trading suspended");
      publish_risk();
    }
  }
  refresh_pnl_view();
  Json pnl;
  {
    std::lock_guard lock(view_mu_);
    pnl = pnl_cache_;
  }
  broadcaster_.publish(EventKind::pnl_update, pnl);
}

bool Engine::trading_blocked() const {
  std::lock_guard lock(state_mu_);
  return risk_.suspended || control_.paused;
}

std::optional<Trade> Engine::execute(const OrderRequest& order, std::span<const MarketSnapshot> batch,
                                     const ControlSnapshot& control, TimestampMs now) {
  if (trading_blocked()) return std::nullopt;
  {
    std::lock_guard lock(eval_mu_);
    if (resolved_markets_.contains(order.market_id)) return std::nullopt;
  }
  Trade trade;
  if (control.mode == TradingMode::paper) {
    trade = paper_fill(order, batch, control.risk.max_position_usdc, config_.costs, now);
  } else {
    if (!live_executor_) return std::nullopt;
    OrderRequest live = order;
    live.mode = TradingMode::live;
    try {
      trade = live_executor_->submit(live, LiveArming{config_.live_trading_enabled, control.armed},
                                     control.risk.max_position_usdc, now);
    } catch (const AmbiguousSubmitError& e) {
      Log::error(std::string("live submit outcome unknown, not retrying: ") + e.what());
      return std::nullopt;
    }
  }
  trade = ledger_->record(std::move(trade));
  drain_ledger_events();
  if (trade.status != TradeStatus::filled) return std::nullopt;
  return trade;
}

void Engine::emit_signal(const ArbitrageSignal& signal, ScanCycleReport& report) {
  persist(Table::signals, signal.detected_at, signal.market_ids.empty() ? std::string() : signal.market_ids.front(),
          std::string(to_string(signal.kind)), Json(signal));
  {
    std::lock_guard lock(view_mu_);
    signals_view_.push_back(Json(signal));
    while (signals_view_.size() > kSignalsKept) signals_view_.pop_front();
  }
  broadcaster_.publish(EventKind::signal, Json(signal));
  ++report.signals_emitted;
}

void Engine::structural_trades(const ArbitrageSignal& signal, std::span<const MarketSnapshot> batch,
                               const ControlSnapshot& control, std::uint64_t cycle_id, TimestampMs now,
                               ScanCycleReport& report) {
  if (!config_.execute_structural) return;
  RiskConfig sizing = control.risk;
  sizing.bankroll_usdc = risk_state().day_start_bankroll_usdc;
  for (const auto& id : signal.market_ids) {
    if (ledger_->has_open_position(id)) continue;
    const auto it = std::find_if(batch.begin(), batch.end(), [&](const auto& m) { return m.market_id == id; });
    if (it == batch.end() || !it->tradable()) continue;
    Side side = Side::buy_yes;
    double f_star = 0.0;
    if (signal.kind == SignalKind::latency) {
      side = signal.direction == SignalDirection::buy_no ? Side::buy_no : Side::buy_yes;
      const double edge = signal.magnitude;
      const Probability price = side_price(side, it->yes_price);
      const Probability p_side(std::clamp(price.value() + edge, 0.0, 1.0));
      f_star = kelly_fraction(p_side, net_odds_from_price(price));
    } else {
      side = signal.leg_side.value_or(Side::buy_yes);
      f_star = signal.magnitude;
    }
    const double size = position_size(f_star, sizing);
    if (size <= 0.0) continue;
    OrderRequest order;
    order.market_id = id;
    order.side = side;
    order.size_usdc = size;
    order.limit_price = side_price(side, it->yes_price);
    order.mode = control.mode;
    order.provenance = signal.kind == SignalKind::negation    ? Provenance::negation
                       : signal.kind == SignalKind::partition ? Provenance::partition
                                                              : Provenance::latency;
    order.idempotency_key = make_idempotency_key(id, cycle_id, side);
    try {
      if (execute(order, batch, control, now)) ++report.trades_executed;
    } catch (const std::exception& e) {
      Log::warn("structural order for " + id + " failed: " + e.what());
    }
  }
}

void Engine::latency_scan(std::span<const MarketSnapshot> batch, const ControlSnapshot& control,
                          std::uint64_t cycle_id, TimestampMs now, ScanCycleReport& report) {
  if (!quotes_ || strike_map_.empty()) return;
  try {
    quotes_->refresh(now);
  } catch (const std::exception& e) {
    Log::warn(std::string("quote refresh failed: ") + e.what());
    return;
  }
  for (const auto& m : batch) {
    const auto it = strike_map_.find(m.market_id);
    if (it == strike_map_.end()) continue;
    try {
      StrikeContract contract = it->second;
      contract.expiry = m.expiry;
      const auto quote = quotes_->latest(contract.symbol);
      if (!quote) continue;
      const auto history = quotes_->history(contract.symbol);
      const auto vol = realized_volatility(history, config_.vol_window_hours, contract.symbol);
      const auto p_cex = cex_implied_probability(*quote, contract, vol, now, config_.allow_degenerate_vol);
      if (auto sig = latency_signal(p_cex, m.yes_price, control.latency_threshold, m.market_id, now)) {
        emit_signal(*sig, report);
        structural_trades(*sig, batch, control, cycle_id, now, report);
      }
    } catch (const std::exception& e) {
      Log::warn("latency check for " + m.market_id + " skipped: " + e.what());
    }
  }
}

ScanCycleReport Engine::run_cycle() {
  std::lock_guard cycle_lock(cycle_mu_);
  if (replay_clock_ && clock_started_) {
    replay_clock_->advance(static_cast<TimestampMs>(std::llround(config_.scan_interval_secs * 1000.0)));
  }
  clock_started_ = true;
  const TimestampMs now = clock_->now();
  apply_pending(now);

  ControlSnapshot control;
  RiskState risk;
  bool day_changed = false;
  ScanCycleReport report;
  {
    std::lock_guard lock(state_mu_);
    control = control_;
    report.cycle_id = ++cycle_id_;
    auto rolled = roll_day(risk_, now);
    day_changed = rolled.trading_day != risk_.trading_day;
    risk_ = rolled;
    risk = risk_;
  }
  report.started_at = now;
  if (day_changed) {
    persist(Table::risk_days, now, "", "rollover", Json(RiskRecord{risk, "rollover", now}));
    publish_risk();
  }

  const auto finish = [&](ScanCycleReport& r) {
    r.duration_ms = std::max<std::int64_t>(0, clock_->now() - now);
    {
      std::lock_guard lock(view_mu_);
      last_report_ = r;
    }
    return r;
  };

  FetchResult fetched;
  try {
    fetched = feed_->fetch();
  } catch (const SourceUnavailable& e) {
    Log::warn(std::string("market source unavailable, skipping cycle: ") + e.what());
    report.skipped = "source_unavailable";
    return finish(report);
  }
  for (const auto& err : fetched.errors) Log::warn("malformed market record " + err.record_id + ": " + err.message);
  report.markets_fetched = fetched.markets.size();

  auto filtered = filter_markets(fetched.markets, config_.filter, now);
  report.markets_filtered = filtered.size();
  {
    std::lock_guard lock(truth_mu_);
    for (const auto& m : filtered) {
      if (m.sim_truth) sim_truth_[m.market_id] = *m.sim_truth;
    }
  }
  for (const auto& m : filtered) persist(Table::snapshots, m.observed_at, m.market_id, "marketdata", Json(m));
  {
    Json markets = filtered;
    {
      std::lock_guard lock(view_mu_);
      markets_view_ = markets;
    }
    broadcaster_.publish(EventKind::snapshot_batch, Json{{"cycle_id", report.cycle_id}, {"markets", markets}});
  }

  if (control.paused) {
    report.skipped = "paused";
    return finish(report);
  }
  if (risk.suspended) {
    report.skipped = "suspended";
    return finish(report);
  }

  std::vector<const MarketSnapshot*> selected;
  {
    std::lock_guard lock(eval_mu_);
    for (const auto& m : filtered) {
      if (m.tradable() && !resolved_markets_.contains(m.market_id)) selected.push_back(&m);
    }
  }
  std::stable_sort(selected.begin(), selected.end(),
                   [](const auto* a, const auto* b) { return a->volume_usdc > b->volume_usdc; });
  if (selected.size() > config_.max_markets_per_cycle) selected.resize(config_.max_markets_per_cycle);

  struct Job {
    const MarketSnapshot* market;
    std::optional<SwarmEvaluator::Pending> pending;
  };
  std::vector<Job> jobs;
  jobs.reserve(selected.size());
  for (const auto* m : selected) {
    try {
      const auto cohort = sample_personas(
          personas_, config_.agents_per_market,
          derive_seed(config_.seed, {"cohort", std::to_string(report.cycle_id), m->market_id}));
      jobs.push_back({m, evaluator_->begin(*m, cohort)});
    } catch (const std::exception& e) {
      Log::warn("evaluation of " + m->market_id + " not started: " + e.what());
    }
  }

  RiskConfig sizing = control.risk;
  sizing.bankroll_usdc = risk.day_start_bankroll_usdc;
  for (auto& job : jobs) {
    const auto& m = *job.market;
    try {
      auto batch = evaluator_->finish(std::move(*job.pending));
      report.provider_calls += batch.provider_calls;
      report.cache_hits += batch.cache_hits;
      for (const auto& f : batch.failures) {
        Log::debug("agent " + f.persona_id + " failed on " + m.market_id + ": " + f.detail);
      }
      for (const auto& p : batch.predictions) persist(Table::predictions, p.created_at, p.market_id, p.persona_id, Json(p));

      const auto consensus = build_consensus(m, batch.predictions, control.gates, clock_->now());
      const auto divergence = score_market(consensus.p_swarm, consensus.p_market, m.market_id);
      const ConsensusRecord record{report.cycle_id, consensus, divergence};
      persist(Table::consensus, consensus.decided_at, m.market_id, "swarm", Json(record));
      ++report.markets_evaluated;
      {
        std::lock_guard lock(eval_mu_);
        auto& history = consensus_history_[m.market_id];
        history.push_back(consensus);
        if (history.size() > kForecastHistory) history.pop_front();
        auto& per_persona = prediction_history_[m.market_id];
        for (const auto& p : batch.predictions) {
          auto& h = per_persona[p.persona_id];
          h.push_back(p);
          if (h.size() > kForecastHistory) h.pop_front();
        }
      }
      {
        std::lock_guard lock(view_mu_);
        consensus_view_[m.market_id] = Json(record);
        agents_view_[m.market_id] = batch.predictions;
      }
      broadcaster_.publish(EventKind::consensus, Json(record));

      if (auto sig = divergence_signal(divergence, consensus.p_swarm, consensus.p_market,
                                       control.js_priority_threshold, consensus.decided_at)) {
        emit_signal(*sig, report);
      }

      if (consensus.gated || ledger_->has_open_position(m.market_id)) continue;
      const Probability price = side_price(consensus.side, m.yes_price);
      const Probability p_side =
          consensus.side == Side::buy_yes ? consensus.p_combined : consensus.p_combined.complement();
      const double size = position_size(kelly_fraction(p_side, net_odds_from_price(price)), sizing);
      if (size <= 0.0) continue;
      OrderRequest order;
      order.market_id = m.market_id;
      order.side = consensus.side;
      order.size_usdc = size;
      order.limit_price = price;
      order.mode = control.mode;
      order.provenance = Provenance::swarm;
      order.idempotency_key = make_idempotency_key(m.market_id, report.cycle_id, consensus.side);
      if (execute(order, filtered, control, clock_->now())) ++report.trades_executed;
    } catch (const std::exception& e) {
      Log::warn("market " + m.market_id + " skipped this cycle: " + e.what());
    }
  }

  const TimestampMs scan_at = clock_->now();
  try {
    NegationConfig neg = config_.negation;
    neg.deviation_threshold = control.negation_deviation_threshold;
    for (const auto& pair : find_negation_pairs(filtered, neg)) {
      if (auto sig = negation_signal(pair, control.negation_deviation_threshold, scan_at)) {
        emit_signal(*sig, report);
        structural_trades(*sig, filtered, control, report.cycle_id, scan_at, report);
      }
    }
  } catch (const std::exception& e) {
    Log::warn(std::string("negation scan failed: ") + e.what());
  }
  for (const auto& [group, members] : partition_groups_) {
    try {
      std::vector<MarketSnapshot> present;
      for (const auto& id : members) {
        auto it = std::find_if(filtered.begin(), filtered.end(), [&](const auto& m) { return m.market_id == id; });
        if (it != filtered.end()) present.push_back(*it);
      }
      if (present.size() != members.size()) continue;
      if (auto sig = check_partition(present, control.partition_deviation_threshold, scan_at)) {
        emit_signal(*sig, report);
        structural_trades(*sig, filtered, control, report.cycle_id, scan_at, report);
      }
    } catch (const std::exception& e) {
      Log::warn("partition " + group + " skipped: " + e.what());
    }
  }
  latency_scan(filtered, control, report.cycle_id, scan_at, report);

  drain_ledger_events();
  {
    Json pnl;
    {
      std::lock_guard lock(view_mu_);
      pnl = pnl_cache_;
    }
    broadcaster_.publish(EventKind::pnl_update, pnl);
  }
  return finish(report);
}

void Engine::run_loop(std::size_t max_cycles, const std::function<void(const ScanCycleReport&)>& on_report) {
  {
    std::lock_guard lock(stop_mu_);
    stop_requested_ = false;
  }
  using steady = std::chrono::steady_clock;
  const auto interval = std::chrono::duration_cast<steady::duration>(
      std::chrono::duration<double>(config_.scan_interval_secs));
  auto next_start = steady::now();
  for (std::size_t n = 0; max_cycles == 0 || n < max_cycles; ++n) {
    {
      std::unique_lock lock(stop_mu_);
      if (stop_cv_.wait_until(lock, next_start, [&] { return stop_requested_; })) return;
    }
    const auto started = steady::now();
    const auto report = run_cycle();
    if (on_report) on_report(report);
    // The replay clock is virtual; cycles run back to back.
    next_start = replay_clock_ ? steady::now() : std::max(started + interval, steady::now());
  }
}

void Engine::stop() {
  {
    std::lock_guard lock(stop_mu_);
    stop_requested_ = true;
  }
  stop_cv_.notify_all();
}

EvaluationReport Engine::live_evaluation(ForecastSource source) const {
  std::vector<ForecastRecord> records;
  std::lock_guard lock(eval_mu_);
  std::map<std::string, Resolution> resolved;
  for (const auto& r : resolutions_) resolved.emplace(r.market_id, r);
  for (const auto& [id, r] : resolved) {
    if (source == ForecastSource::agent) {
      auto it = prediction_history_.find(id);
      if (it == prediction_history_.end()) continue;
      for (const auto& [persona, history] : it->second) {
        const AgentPrediction* latest = nullptr;
        for (const auto& p : history) {
          if (p.created_at < r.resolved_at) latest = &p;
        }
        if (latest) records.push_back({id, latest->probability, outcome_value(r.outcome), source, persona});
      }
      continue;
    }
    auto it = consensus_history_.find(id);
    if (it == consensus_history_.end()) continue;
    const SwarmConsensus* latest = nullptr;
    for (const auto& c : it->second) {
      if (c.decided_at < r.resolved_at) latest = &c;
    }
    if (latest) records.push_back({id, Probability(pick_forecast(*latest, source)), outcome_value(r.outcome), source, {}});
  }
  return evaluate_forecasts(std::move(records), source);
}

}  // namespace polyswarm
