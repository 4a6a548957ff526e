#include "polyswarm/execution.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "polyswarm/errors.hpp"
#include "polyswarm/log.hpp"

namespace polyswarm {

namespace {

template <typename E, std::size_t N>
E enum_from(std::string_view s, const std::array<E, N>& values, const char* what) {
  for (auto v : values) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError(std::string("unknown ") + what + ": " + std::string(s));
}

}  // namespace

std::string_view to_string(TradingMode m) { return m == TradingMode::paper ? "paper" : "live"; }

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::swarm: return "swarm";
    case Provenance::negation: return "negation";
    case Provenance::partition: return "partition";
    case Provenance::latency: return "latency";
  }
  return "swarm";
}

std::string_view to_string(TradeStatus s) {
  switch (s) {
    case TradeStatus::filled: return "filled";
    case TradeStatus::rejected: return "rejected";
    case TradeStatus::resolved_win: return "resolved_win";
    case TradeStatus::resolved_loss: return "resolved_loss";
  }
  return "filled";
}

std::string_view to_string(Outcome o) { return o == Outcome::yes ? "yes" : "no"; }

TradingMode trading_mode_from_string(std::string_view s) {
  return enum_from(s, std::array{TradingMode::paper, TradingMode::live}, "trading mode");
}
Provenance provenance_from_string(std::string_view s) {
  return enum_from(s, std::array{Provenance::swarm, Provenance::negation, Provenance::partition, Provenance::latency},
                   "provenance");
}
TradeStatus trade_status_from_string(std::string_view s) {
  return enum_from(
      s, std::array{TradeStatus::filled, TradeStatus::rejected, TradeStatus::resolved_win, TradeStatus::resolved_loss},
      "trade status");
}
Outcome outcome_from_string(std::string_view s) {
  return enum_from(s, std::array{Outcome::yes, Outcome::no}, "outcome");
}

std::string make_idempotency_key(const std::string& market_id, std::uint64_t cycle_id, Side side) {
  return market_id + ":" + std::to_string(cycle_id) + ":" + std::string(to_string(side));
}

// ---------------------------------------------------------------- codecs

void to_json(Json& j, const Trade& t) {
  j = Json{{"trade_id", t.trade_id},
           {"market_id", t.order.market_id},
           {"side", to_string(t.order.side)},
           {"size_usdc", t.order.size_usdc},
           {"limit_price", t.order.limit_price.value()},
           {"mode", to_string(t.order.mode)},
           {"provenance", to_string(t.order.provenance)},
           {"idempotency_key", t.order.idempotency_key},
           {"fill_price", t.fill_price.value()},
           {"shares", t.shares},
           {"fee_usdc", t.fee_usdc},
           {"filled_at", t.filled_at},
           {"status", to_string(t.status)},
           {"reject_reason", t.reject_reason},
           {"exchange_order_id", t.exchange_order_id},
           {"realized_pnl_usdc", t.realized_pnl_usdc},
           {"resolved_at", t.resolved_at ? Json(*t.resolved_at) : Json(nullptr)}};
}

void from_json(const Json& j, Trade& t) {
  t.trade_id = j.at("trade_id").get<std::string>();
  t.order.market_id = j.at("market_id").get<std::string>();
  t.order.side = side_from_string(j.at("side").get<std::string>());
  t.order.size_usdc = j.at("size_usdc").get<double>();
  t.order.limit_price = Probability(j.at("limit_price").get<double>());
  t.order.mode = trading_mode_from_string(j.at("mode").get<std::string>());
  t.order.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  t.order.idempotency_key = j.value("idempotency_key", std::string());
  t.fill_price = Probability(j.at("fill_price").get<double>());
  t.shares = j.at("shares").get<double>();
  t.fee_usdc = j.value("fee_usdc", 0.0);
  t.filled_at = j.at("filled_at").get<TimestampMs>();
  t.status = trade_status_from_string(j.at("status").get<std::string>());
  t.reject_reason = j.value("reject_reason", std::string());
  t.exchange_order_id = j.value("exchange_order_id", std::string());
  t.realized_pnl_usdc = j.value("realized_pnl_usdc", 0.0);
  t.resolved_at.reset();
  if (auto it = j.find("resolved_at"); it != j.end() && !it->is_null()) t.resolved_at = it->get<TimestampMs>();
  if (t.order.size_usdc < 0.0 || t.shares < 0.0) throw ValidationError("negative trade size");
}

std::string_view to_string(LedgerEvent::Type t) {
  switch (t) {
    case LedgerEvent::Type::fill: return "fill";
    case LedgerEvent::Type::reject: return "reject";
    case LedgerEvent::Type::settle: return "settle";
  }
  return "fill";
}

void to_json(Json& j, const LedgerEvent& e) {
  j = Json{{"event", to_string(e.type)}, {"at", e.at}, {"trade", e.trade}};
}

void from_json(const Json& j, LedgerEvent& e) {
  const auto type = j.at("event").get<std::string>();
  if (type == "fill") {
    e.type = LedgerEvent::Type::fill;
  } else if (type == "reject") {
    e.type = LedgerEvent::Type::reject;
  } else if (type == "settle") {
    e.type = LedgerEvent::Type::settle;
  } else {
    throw ValidationError("unknown ledger event: " + type);
  }
  e.at = j.at("at").get<TimestampMs>();
  e.trade = j.at("trade").get<Trade>();
}

void to_json(Json& j, const LedgerSummary& s) {
  Json curve = Json::array();
  for (const auto& p : s.equity_curve) curve.push_back(Json{{"at", p.at}, {"bankroll_usdc", p.bankroll_usdc}});
  j = Json{{"realized_pnl_usdc", s.realized_pnl_usdc},
           {"win_rate", s.win_rate ? Json(*s.win_rate) : Json(nullptr)},
           {"open_exposure_usdc", s.open_exposure_usdc},
           {"wins", s.wins},
           {"losses", s.losses},
           {"trades_filled", s.trades_filled},
           {"trades_rejected", s.trades_rejected},
           {"cash_usdc", s.cash_usdc},
           {"equity_curve", std::move(curve)}};
}

// ---------------------------------------------------------------- ledger

Ledger::Ledger(double starting_bankroll_usdc, TimestampMs opened_at)
    : starting_bankroll_(starting_bankroll_usdc), cash_(starting_bankroll_usdc) {
  equity_.push_back({opened_at, starting_bankroll_usdc});
}

void Ledger::set_listener(Listener listener) {
  std::lock_guard lock(mu_);
  listener_ = std::move(listener);
}

std::string Ledger::next_trade_id_locked() {
  char buf[32];
  std::snprintf(buf, sizeof buf, "T%08llu", static_cast<unsigned long long>(next_id_));
  return buf;
}

Trade Ledger::record(Trade trade) {
  std::lock_guard lock(mu_);
  trade.trade_id = next_trade_id_locked();
  const LedgerEvent event{trade.status == TradeStatus::rejected ? LedgerEvent::Type::reject : LedgerEvent::Type::fill,
                          trade, trade.filled_at};
  apply_locked(event);
  if (listener_) listener_(event);
  return trade;
}

std::vector<Trade> Ledger::resolve(const std::string& market_id, Outcome outcome, TimestampMs at) {
  std::lock_guard lock(mu_);
  std::vector<Trade> settled;
  std::vector<std::string> ids;
  for (const auto& [id, t] : open_) {
    if (t.order.market_id == market_id) ids.push_back(id);
  }
  for (const auto& id : ids) {
    Trade t = open_.at(id);
    const bool yes_side = t.order.side == Side::buy_yes;
    const bool won = (outcome == Outcome::yes) == yes_side;
    const double settle = won ? 1.0 : 0.0;
    t.realized_pnl_usdc = t.shares * (settle - t.fill_price.value());
    t.status = won ? TradeStatus::resolved_win : TradeStatus::resolved_loss;
    t.resolved_at = at;
    const LedgerEvent event{LedgerEvent::Type::settle, t, at};
    apply_locked(event);
    if (listener_) listener_(event);
    settled.push_back(std::move(t));
  }
  if (settled.empty()) Log::warn("resolve_market: no open position in " + market_id);
  return settled;
}

void Ledger::apply(const LedgerEvent& event) {
  std::lock_guard lock(mu_);
  apply_locked(event);
}

void Ledger::apply_locked(const LedgerEvent& event) {
  const auto& t = event.trade;
  switch (event.type) {
    case LedgerEvent::Type::fill:
      cash_ -= t.order.size_usdc + t.fee_usdc;
      realized_pnl_ -= t.fee_usdc;
      open_[t.trade_id] = t;
      index_[t.trade_id] = all_.size();
      all_.push_back(t);
      ++filled_;
      break;
    case LedgerEvent::Type::reject:
      index_[t.trade_id] = all_.size();
      all_.push_back(t);
      ++rejected_;
      break;
    case LedgerEvent::Type::settle: {
      auto it = open_.find(t.trade_id);
      if (it == open_.end()) throw ValidationError("settlement for unknown open trade " + t.trade_id);
      const double payout = t.status == TradeStatus::resolved_win ? t.shares : 0.0;
      cash_ += payout;
      realized_pnl_ += t.realized_pnl_usdc;
      (t.status == TradeStatus::resolved_win ? wins_ : losses_) += 1;
      open_.erase(it);
      all_[index_.at(t.trade_id)] = t;
      break;
    }
  }
  // Trade ids are dense; keep the counter ahead of anything replayed.
  if (t.trade_id.size() > 1 && t.trade_id[0] == 'T') {
    next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(t.trade_id.substr(1)) + 1);
  }
  if (event.type != LedgerEvent::Type::reject) equity_.push_back({event.at, starting_bankroll_ + realized_pnl_});
  events_.push_back(event);
}

LedgerSummary Ledger::summary() const {
  std::lock_guard lock(mu_);
  LedgerSummary s;
  s.realized_pnl_usdc = realized_pnl_;
  s.wins = wins_;
  s.losses = losses_;
  if (wins_ + losses_ > 0) s.win_rate = static_cast<double>(wins_) / static_cast<double>(wins_ + losses_);
  for (const auto& [id, t] : open_) s.open_exposure_usdc += t.order.size_usdc;
  s.equity_curve = equity_;
  s.trades_filled = filled_;
  s.trades_rejected = rejected_;
  s.cash_usdc = cash_;
  return s;
}

std::vector<Trade> Ledger::open_positions() const {
  std::lock_guard lock(mu_);
  std::vector<Trade> out;
  for (const auto& [id, t] : open_) out.push_back(t);
  return out;
}

std::vector<Trade> Ledger::trades() const {
  std::lock_guard lock(mu_);
  return all_;
}

std::vector<LedgerEvent> Ledger::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

bool Ledger::has_open_position(const std::string& market_id) const {
  std::lock_guard lock(mu_);
  return std::any_of(open_.begin(), open_.end(), [&](const auto& kv) { return kv.second.order.market_id == market_id; });
}

LedgerSummary summarize_events(std::span<const LedgerEvent> events, double starting_bankroll_usdc,
                               TimestampMs opened_at) {
  LedgerSummary s;
  s.cash_usdc = starting_bankroll_usdc;
  s.equity_curve.push_back({opened_at, starting_bankroll_usdc});
  std::map<std::string, double> open_size;
  for (const auto& e : events) {
    switch (e.type) {
      case LedgerEvent::Type::fill:
        ++s.trades_filled;
        open_size[e.trade.trade_id] = e.trade.order.size_usdc;
        s.cash_usdc -= e.trade.order.size_usdc + e.trade.fee_usdc;
        s.realized_pnl_usdc -= e.trade.fee_usdc;
        break;
      case LedgerEvent::Type::reject:
        ++s.trades_rejected;
        break;
      case LedgerEvent::Type::settle:
        open_size.erase(e.trade.trade_id);
        s.realized_pnl_usdc += e.trade.realized_pnl_usdc;
        if (e.trade.status == TradeStatus::resolved_win) {
          ++s.wins;
          s.cash_usdc += e.trade.shares;
        } else {
          ++s.losses;
        }
        break;
    }
    if (e.type != LedgerEvent::Type::reject) s.equity_curve.push_back({e.at, starting_bankroll_usdc + s.realized_pnl_usdc});
  }
  for (const auto& [id, size] : open_size) s.open_exposure_usdc += size;
  if (s.wins + s.losses > 0) s.win_rate = static_cast<double>(s.wins) / static_cast<double>(s.wins + s.losses);
  return s;
}

// ---------------------------------------------------------------- paper fills

namespace {

Trade rejected_trade(const OrderRequest& order, std::string reason, TimestampMs now) {
  Trade t;
  t.order = order;
  t.fill_price = order.limit_price;
  t.filled_at = now;
  t.status = TradeStatus::rejected;
  t.reject_reason = std::move(reason);
  return t;
}

}  // namespace

Trade paper_fill(const OrderRequest& order, std::span<const MarketSnapshot> batch, double max_position_usdc,
                 const ExecutionCosts& costs, TimestampMs now) {
  if (order.mode != TradingMode::paper) throw ValidationError("paper_fill called with a live order");
  const auto it = std::find_if(batch.begin(), batch.end(),
                               [&](const MarketSnapshot& m) { return m.market_id == order.market_id; });
  if (it == batch.end()) throw StaleMarketError("market " + order.market_id + " is not in the current batch");
  if (!(order.size_usdc > 0.0)) return rejected_trade(order, "non_positive_size", now);
  if (order.size_usdc > max_position_usdc + 1e-9) return rejected_trade(order, "exceeds_cap", now);

  const double quoted = side_price(order.side, it->yes_price).value();
  const double price = std::min(quoted * (1.0 + costs.slippage_bps / 1e4), 1.0 - 1e-9);
  Trade t;
  t.order = order;
  t.fill_price = Probability(price);
  t.shares = order.size_usdc / price;
  t.fee_usdc = order.size_usdc * costs.fee_bps / 1e4;
  t.filled_at = now;
  t.status = TradeStatus::filled;
  return t;
}

// ---------------------------------------------------------------- live orders

SubmitResult MockOrderClient::submit(const LimitOrder& order) {
  std::lock_guard lock(mu_);
  submitted_.push_back(order);
  switch (behavior_) {
    case Behavior::accept_all:
      return SubmitResult{true, "MOCK-" + std::to_string(submitted_.size()), {}, order.price.value()};
    case Behavior::reject_all:
      return SubmitResult{false, {}, "rejected_by_exchange", std::nullopt};
    case Behavior::time_out:
      throw TransportError("mock order client timed out");
  }
  return {};
}

bool MockOrderClient::cancel(const std::string& order_id) {
  std::lock_guard lock(mu_);
  cancelled_.push_back(order_id);
  return true;
}

void MockOrderClient::set_behavior(Behavior b) {
  std::lock_guard lock(mu_);
  behavior_ = b;
}

std::vector<LimitOrder> MockOrderClient::submissions() const {
  std::lock_guard lock(mu_);
  return submitted_;
}

std::vector<std::string> MockOrderClient::cancellations() const {
  std::lock_guard lock(mu_);
  return cancelled_;
}

HttpOrderClient::HttpOrderClient(std::string base_url, std::string api_key, std::shared_ptr<HttpClient> client,
                                 std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), api_key_(std::move(api_key)), client_(std::move(client)), timeout_(timeout) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

SubmitResult HttpOrderClient::submit(const LimitOrder& order) {
  const Json body{{"market", order.market_id},
                  {"side", order.side == Side::buy_yes ? "BUY_YES" : "BUY_NO"},
                  {"price", order.price.value()},
                  {"size", order.size_usdc},
                  {"type", "LIMIT"},
                  {"client_order_id", order.idempotency_key}};
  HttpHeaders headers{{"POLY_API_KEY", api_key_}, {"Idempotency-Key", order.idempotency_key}};
  const auto res = client_->post(base_url_ + "/order", body.dump(), headers, timeout_);
  if (res.status >= 500) throw TransportError("order endpoint returned HTTP " + std::to_string(res.status));
  Json reply;
  try {
    reply = Json::parse(res.body);
  } catch (const Json::exception&) {
    throw TransportError("order endpoint returned an unreadable body");
  }
  SubmitResult out;
  out.accepted = res.status >= 200 && res.status < 300 && reply.value("success", false);
  out.order_id = reply.value("orderID", std::string());
  out.reason = reply.value("errorMsg", out.accepted ? std::string() : "HTTP " + std::to_string(res.status));
  if (out.accepted) out.fill_price = order.price.value();
  return out;
}

bool HttpOrderClient::cancel(const std::string& order_id) {
  const Json body{{"orderID", order_id}};
  const auto res = client_->post(base_url_ + "/cancel", body.dump(), {{"POLY_API_KEY", api_key_}}, timeout_);
  return res.status >= 200 && res.status < 300;
}

Trade LiveExecutor::submit(const OrderRequest& order, const LiveArming& arming, double max_position_usdc,
                           TimestampMs now) {
  if (order.mode != TradingMode::live) return rejected_trade(order, "not_live_mode", now);
  if (!arming.enabled_in_config || !arming.armed) return rejected_trade(order, "not_armed", now);
  if (!(order.size_usdc > 0.0)) return rejected_trade(order, "non_positive_size", now);
  if (order.size_usdc > max_position_usdc + 1e-9) return rejected_trade(order, "exceeds_cap", now);
  if (order.idempotency_key.empty()) throw ValidationError("live orders need an idempotency key");

  std::lock_guard lock(mu_);
  if (auto it = seen_.find(order.idempotency_key); it != seen_.end()) {
    if (!it->second) {
      throw AmbiguousSubmitError("order " + order.idempotency_key + " has an unknown outcome; not resubmitting");
    }
    return *it->second;
  }
  const LimitOrder limit{order.market_id, order.side, order.limit_price, order.size_usdc, order.idempotency_key};
  SubmitResult result;
  try {
    result = client_.submit(limit);
  } catch (const TransportError& e) {
    seen_.emplace(order.idempotency_key, std::nullopt);
    throw AmbiguousSubmitError("submit of " + order.idempotency_key + " is ambiguous: " + e.what());
  }
  Trade t;
  if (!result.accepted) {
    t = rejected_trade(order, result.reason.empty() ? "rejected" : result.reason, now);
  } else {
    t.order = order;
    t.fill_price = Probability(result.fill_price.value_or(order.limit_price.value()));
    t.shares = order.size_usdc / t.fill_price.value();
    t.filled_at = now;
    t.status = TradeStatus::filled;
    t.exchange_order_id = result.order_id;
  }
  seen_.emplace(order.idempotency_key, t);
  return t;
}

// ---------------------------------------------------------------- trade log

TradeLogWriter::TradeLogWriter(const std::string& path) : out_(path, std::ios::app) {
  if (!out_) throw StorageError("cannot open trade log " + path);
}

void TradeLogWriter::append(const LedgerEvent& event) {
  std::lock_guard lock(mu_);
  out_ << Json(event).dump() << '\n';
  out_.flush();
  if (!out_) throw StorageError("trade log write failed");
}

std::vector<LedgerEvent> read_trade_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open trade log " + path);
  std::vector<LedgerEvent> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(Json::parse(line).get<LedgerEvent>());
  }
  return out;
}

}  // namespace polyswarm
