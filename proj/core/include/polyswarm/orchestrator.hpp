#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "polyswarm/aggregation.hpp"
#include "polyswarm/analysis.hpp"
#include "polyswarm/clock.hpp"
#include "polyswarm/config.hpp"
#include "polyswarm/control.hpp"
#include "polyswarm/evaluation.hpp"
#include "polyswarm/execution.hpp"
#include "polyswarm/latency_arb.hpp"
#include "polyswarm/marketdata.hpp"
#include "polyswarm/persistence.hpp"
#include "polyswarm/risk.hpp"
#include "polyswarm/server.hpp"
#include "polyswarm/swarm.hpp"

namespace polyswarm {

struct ScanCycleReport {
  std::uint64_t cycle_id = 0;
  TimestampMs started_at = 0;
  std::size_t markets_fetched = 0;
  std::size_t markets_filtered = 0;
  std::size_t markets_evaluated = 0;
  std::size_t signals_emitted = 0;
  std::size_t trades_executed = 0;
  std::int64_t duration_ms = 0;  // event-clock time spent in the cycle
  std::size_t provider_calls = 0;
  std::size_t cache_hits = 0;
  // Why evaluation was skipped: paused, suspended, source_unavailable.
  std::optional<std::string> skipped;
};

void to_json(Json& j, const ScanCycleReport& r);
void from_json(const Json& j, ScanCycleReport& r);

// Settings an operator can change at runtime. A cycle copies this once at
// its start and runs under that copy.
struct ControlSnapshot {
  bool paused = false;
  TradingMode mode = TradingMode::paper;
  bool armed = false;
  GateConfig gates;
  RiskConfig risk;
  double negation_deviation_threshold = 0.02;
  double partition_deviation_threshold = 0.02;
  double js_priority_threshold = 0.02;
  double latency_threshold = 0.10;
};

void to_json(Json& j, const ControlSnapshot& c);

ControlSnapshot initial_control(const AppConfig& config);

// Names accepted by set_threshold.
const std::vector<std::string>& threshold_names();

// Applies set_threshold to a copy; throws ValidationError for unknown names
// or out-of-range values.
ControlSnapshot with_threshold(ControlSnapshot control, const std::string& name, double value,
                               std::size_t agents_per_market);

// Replays persisted pause/resume/set_mode/set_threshold commands. Arming is
// never restored.
ControlSnapshot fold_control_commands(const std::vector<StoredRecord>& commands, ControlSnapshot base,
                                      std::size_t agents_per_market);

// Timestamp of the session-open record, 0 for an empty store.
TimestampMs store_opened_at(const Store& store);

struct EvaluationReport {
  ForecastSource source = ForecastSource::combined;
  std::vector<ForecastRecord> records;
  std::optional<double> brier;
  std::optional<double> log_loss;
  std::optional<CalibrationTable> calibration;
  std::map<std::string, AgentScore> per_agent;
};

void to_json(Json& j, const EvaluationReport& r);

struct Resolution {
  std::string market_id;
  Outcome outcome = Outcome::yes;
  TimestampMs resolved_at = 0;
};

// Resolved markets from resolve_market commands and settle events; the first
// resolution of a market wins.
std::vector<Resolution> resolutions_from_store(const Store& store);

// Forecasts known strictly before each market resolved: the latest consensus
// record per market (swarm, combined or market probability) or the latest
// prediction per persona and market (agent). Optional bounds filter on the
// resolution time.
std::vector<ForecastRecord> forecasts_from_store(const Store& store, ForecastSource source,
                                                 std::optional<TimestampMs> from = std::nullopt,
                                                 std::optional<TimestampMs> to = std::nullopt);

EvaluationReport evaluate_forecasts(std::vector<ForecastRecord> records, ForecastSource source,
                                    std::size_t n_bins = 10);

// Test and embedding hooks; anything left empty is built from the config.
struct EngineOverrides {
  std::unique_ptr<MarketFeed> feed;
  std::unique_ptr<InferenceProvider> provider;
  std::unique_ptr<OrderClient> order_client;
  std::unique_ptr<QuoteFeed> quotes;
  const Clock* clock = nullptr;
  std::shared_ptr<HttpClient> http;
};

// Wires every module together and owns the scan loop's state.
class Engine final : public ControlSurface {
 public:
  // Throws ConfigError (missing persona file, unreadable maps) and
  // StorageError at startup.
  explicit Engine(AppConfig config, EngineOverrides overrides = {});
  ~Engine() override;
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  // One scan cycle; pending control commands are applied first.
  ScanCycleReport run_cycle();

  // Fixed-rate loop: cycle k+1 starts at max(start_k + interval, end_k);
  // under the replay clock cycles run back to back.
  // Returns after max_cycles (0 = unbounded) or stop().
  void run_loop(std::size_t max_cycles, const std::function<void(const ScanCycleReport&)>& on_report = {});
  void stop();

  // ControlSurface
  std::optional<Json> view(std::string_view resource) const override;
  Json apply_command(const ControlCommand& command) override;
  Json snapshot() const override;

  Broadcaster& broadcaster() { return broadcaster_; }
  const Clock& clock() const { return *clock_; }
  Store& store() { return *store_; }
  const Ledger& ledger() const { return *ledger_; }
  RiskState risk_state() const;
  ControlSnapshot control() const;
  const InferenceExecutor& executor() const { return *executor_; }
  const AppConfig& config() const { return config_; }
  std::size_t pending_commands() const;
  bool storage_degraded() const;

  // Scores of the forecasts this process recorded for markets it saw resolve.
  EvaluationReport live_evaluation(ForecastSource source) const;

 private:
  struct CycleContext;

  void restore_from_store();
  void apply_pending(TimestampMs now);
  void poll_resolution_file(TimestampMs now);
  void resolve_market(const std::string& market_id, Outcome outcome, TimestampMs at);
  void drain_ledger_events();
  std::optional<Trade> execute(const OrderRequest& order, std::span<const MarketSnapshot> batch,
                               const ControlSnapshot& control, TimestampMs now);
  void emit_signal(const ArbitrageSignal& signal, ScanCycleReport& report);
  void structural_trades(const ArbitrageSignal& signal, std::span<const MarketSnapshot> batch,
                         const ControlSnapshot& control, std::uint64_t cycle_id, TimestampMs now,
                         ScanCycleReport& report);
  void latency_scan(std::span<const MarketSnapshot> batch, const ControlSnapshot& control, std::uint64_t cycle_id,
                    TimestampMs now, ScanCycleReport& report);
  bool trading_blocked() const;
  void persist(Table table, TimestampMs ts, const std::string& market_id, const std::string& source,
               const Json& payload);
  void publish_risk();
  Json risk_view() const;
  Json pnl_view() const;
  void refresh_pnl_view();

  AppConfig config_;
  std::unique_ptr<ManualClock> replay_clock_;
  SystemClock system_clock_;
  const Clock* clock_ = nullptr;

  std::vector<Persona> personas_;
  std::unique_ptr<Store> store_;
  std::unique_ptr<TradeLogWriter> trade_log_;
  std::unique_ptr<Ledger> ledger_;
  std::shared_ptr<HttpClient> http_;
  std::unique_ptr<MarketFeed> feed_;
  std::unique_ptr<InferenceProvider> provider_;
  std::unique_ptr<ResponseCache> cache_;
  std::unique_ptr<InferenceExecutor> executor_;
  std::unique_ptr<SwarmEvaluator> evaluator_;
  std::unique_ptr<OrderClient> order_client_;
  std::unique_ptr<LiveExecutor> live_executor_;
  std::unique_ptr<QuoteFeed> quotes_;
  std::map<std::string, StrikeContract> strike_map_;
  std::map<std::string, std::vector<std::string>> partition_groups_;
  Broadcaster broadcaster_;
  int log_sink_ = -1;

  // Serializes cycles and command application against each other's effects.
  mutable std::mutex cycle_mu_;
  mutable std::mutex command_mu_;

  // control_, risk_, pending_. Never held while calling out.
  mutable std::mutex state_mu_;
  ControlSnapshot control_;
  RiskState risk_;
  std::deque<ControlCommand> pending_;
  std::uint64_t cycle_id_ = 0;
  bool clock_started_ = false;

  // Ledger events produced under the ledger's lock, handled after it returns.
  std::mutex outbox_mu_;
  std::vector<LedgerEvent> outbox_;

  // Read models for REST. Never held while calling out.
  mutable std::mutex view_mu_;
  Json markets_view_ = Json::array();
  std::map<std::string, Json> consensus_view_;
  std::deque<Json> signals_view_;
  std::map<std::string, std::vector<AgentPrediction>> agents_view_;
  Json pnl_cache_;
  std::optional<ScanCycleReport> last_report_;

  mutable std::mutex truth_mu_;
  std::map<std::string, double> sim_truth_;

  mutable std::mutex eval_mu_;
  // Recent decisions per market, for scoring against later resolutions.
  std::map<std::string, std::deque<SwarmConsensus>> consensus_history_;
  std::map<std::string, std::map<std::string, std::deque<AgentPrediction>>> prediction_history_;
  std::vector<Resolution> resolutions_;
  std::set<std::string> resolved_markets_;

  std::mutex storage_mu_;
  struct BufferedWrite {
    Table table;
    TimestampMs ts;
    std::string market_id;
    std::string source;
    Json payload;
  };
  std::deque<BufferedWrite> storage_buffer_;
  std::atomic<bool> storage_degraded_{false};

  std::mutex stop_mu_;
  std::condition_variable stop_cv_;
  bool stop_requested_ = false;
};

}  // namespace polyswarm
