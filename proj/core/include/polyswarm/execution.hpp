#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polyswarm/clock.hpp"
#include "polyswarm/domain.hpp"
#include "polyswarm/http_client.hpp"
#include "polyswarm/json_codec.hpp"

namespace polyswarm {

enum class TradingMode { paper, live };
enum class Provenance { swarm, negation, partition, latency };
enum class TradeStatus { filled, rejected, resolved_win, resolved_loss };
enum class Outcome { yes, no };

std::string_view to_string(TradingMode m);
std::string_view to_string(Provenance p);
std::string_view to_string(TradeStatus s);
std::string_view to_string(Outcome o);
TradingMode trading_mode_from_string(std::string_view s);
Provenance provenance_from_string(std::string_view s);
TradeStatus trade_status_from_string(std::string_view s);
Outcome outcome_from_string(std::string_view s);

struct OrderRequest {
  std::string market_id;
  Side side = Side::buy_yes;
  double size_usdc = 0.0;
  Probability limit_price;
  TradingMode mode = TradingMode::paper;
  Provenance provenance = Provenance::swarm;
  // (market_id, cycle_id, side); guards against duplicate live submits.
  std::string idempotency_key;
};

std::string make_idempotency_key(const std::string& market_id, std::uint64_t cycle_id, Side side);

struct Trade {
  std::string trade_id;
  OrderRequest order;
  Probability fill_price;
  double shares = 0.0;
  double fee_usdc = 0.0;
  TimestampMs filled_at = 0;
  TradeStatus status = TradeStatus::filled;
  std::string reject_reason;
  std::string exchange_order_id;
  double realized_pnl_usdc = 0.0;  // set on settlement
  std::optional<TimestampMs> resolved_at;

  double cost_basis() const { return status == TradeStatus::rejected ? 0.0 : order.size_usdc; }
};

void to_json(Json& j, const Trade& t);
void from_json(const Json& j, Trade& t);

// One entry of the append-only trade log; the ledger is a fold over these.
struct LedgerEvent {
  enum class Type { fill, reject, settle };
  Type type = Type::fill;
  Trade trade;
  TimestampMs at = 0;
};

std::string_view to_string(LedgerEvent::Type t);
void to_json(Json& j, const LedgerEvent& e);
void from_json(const Json& j, LedgerEvent& e);

struct EquityPoint {
  TimestampMs at = 0;
  double bankroll_usdc = 0.0;
};

struct LedgerSummary {
  double realized_pnl_usdc = 0.0;
  std::optional<double> win_rate;  // none until something has resolved
  double open_exposure_usdc = 0.0;
  std::vector<EquityPoint> equity_curve;
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t trades_filled = 0;
  std::size_t trades_rejected = 0;
  double cash_usdc = 0.0;
};

void to_json(Json& j, const LedgerSummary& s);

struct ExecutionCosts {
  double fee_bps = 0.0;
  double slippage_bps = 0.0;
};

// Positions, PnL and win rate. All mutation goes through one mutex so fills
// and resolutions are totally ordered; every change is also emitted as a
// LedgerEvent to the registered listener.
class Ledger {
 public:
  using Listener = std::function<void(const LedgerEvent&)>;

  Ledger(double starting_bankroll_usdc, TimestampMs opened_at);

  void set_listener(Listener listener);

  // Records a filled or rejected trade; assigns its trade_id.
  Trade record(Trade trade);
  // Settles every open position in the market at 1 (win) or 0 (loss).
  std::vector<Trade> resolve(const std::string& market_id, Outcome outcome, TimestampMs at);
  // Folds an event from the trade log without notifying the listener.
  void apply(const LedgerEvent& event);

  LedgerSummary summary() const;
  std::vector<Trade> open_positions() const;
  std::vector<Trade> trades() const;  // every trade, in log order, latest state
  std::vector<LedgerEvent> events() const;
  bool has_open_position(const std::string& market_id) const;

 private:
  void apply_locked(const LedgerEvent& event);
  std::string next_trade_id_locked();

  mutable std::mutex mu_;
  double starting_bankroll_;
  double cash_;
  double realized_pnl_ = 0.0;
  std::size_t wins_ = 0, losses_ = 0, filled_ = 0, rejected_ = 0;
  std::uint64_t next_id_ = 1;
  std::map<std::string, Trade> open_;  // trade_id -> trade
  std::vector<Trade> all_;
  std::map<std::string, std::size_t> index_;  // trade_id -> position in all_
  std::vector<EquityPoint> equity_;
  std::vector<LedgerEvent> events_;
  Listener listener_;
};

// Independent recomputation of the summary from the raw event log.
LedgerSummary summarize_events(std::span<const LedgerEvent> events, double starting_bankroll_usdc,
                               TimestampMs opened_at);

// Fills at the snapshot price of the chosen side (adjusted by slippage) with
// no partial fills. Throws StaleMarketError when the market is not in the
// batch. Orders above the cap come back as rejected trades.
Trade paper_fill(const OrderRequest& order, std::span<const MarketSnapshot> batch, double max_position_usdc,
                 const ExecutionCosts& costs, TimestampMs now);

// ---------------------------------------------------------------- live orders

struct LimitOrder {
  std::string market_id;
  Side side = Side::buy_yes;
  Probability price;
  double size_usdc = 0.0;
  std::string idempotency_key;
};

struct SubmitResult {
  bool accepted = false;
  std::string order_id;
  std::string reason;
  std::optional<double> fill_price;
};

class OrderClient {
 public:
  virtual ~OrderClient() = default;
  // Throws TransportError when the outcome is unknown (timeout, dropped connection).
  virtual SubmitResult submit(const LimitOrder& order) = 0;
  virtual bool cancel(const std::string& order_id) = 0;
};

// Scriptable stand-in for the exchange. Records every submit it receives.
class MockOrderClient final : public OrderClient {
 public:
  enum class Behavior { accept_all, reject_all, time_out };
  explicit MockOrderClient(Behavior behavior = Behavior::accept_all) : behavior_(behavior) {}

  SubmitResult submit(const LimitOrder& order) override;
  bool cancel(const std::string& order_id) override;

  void set_behavior(Behavior b);
  std::vector<LimitOrder> submissions() const;
  std::vector<std::string> cancellations() const;

 private:
  mutable std::mutex mu_;
  Behavior behavior_;
  std::vector<LimitOrder> submitted_;
  std::vector<std::string> cancelled_;
};

// JSON-over-HTTP client for the exchange order endpoint:
// POST <base>/order {market, side, price, size, client_order_id} ->
// {success, orderID, errorMsg}. Credentials go in the API-key headers.
class HttpOrderClient final : public OrderClient {
 public:
  HttpOrderClient(std::string base_url, std::string api_key, std::shared_ptr<HttpClient> client,
                  std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));
  SubmitResult submit(const LimitOrder& order) override;
  bool cancel(const std::string& order_id) override;

 private:
  std::string base_url_;
  std::string api_key_;
  std::shared_ptr<HttpClient> client_;
  std::chrono::milliseconds timeout_;
};

// Both keys must be turned for a live order to leave the process.
struct LiveArming {
  bool enabled_in_config = false;
  bool armed = false;
};

class LiveExecutor {
 public:
  explicit LiveExecutor(OrderClient& client) : client_(client) {}

  // Rejected trades carry reject_reason (not_live_mode, not_armed,
  // exceeds_cap or the client's reason). A transport ambiguity throws
  // AmbiguousSubmitError and poisons the idempotency key: later calls with
  // the same key throw again without resubmitting. A key that already
  // produced a trade returns that trade without resubmitting.
  Trade submit(const OrderRequest& order, const LiveArming& arming, double max_position_usdc, TimestampMs now);

 private:
  OrderClient& client_;
  std::mutex mu_;
  std::map<std::string, std::optional<Trade>> seen_;  // nullopt = ambiguous
};

// ---------------------------------------------------------------- trade log

class TradeLogWriter {
 public:
  explicit TradeLogWriter(const std::string& path);
  void append(const LedgerEvent& event);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

std::vector<LedgerEvent> read_trade_log(const std::string& path);

}  // namespace polyswarm
