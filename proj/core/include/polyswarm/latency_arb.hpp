#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "polyswarm/analysis.hpp"
#include "polyswarm/clock.hpp"
#include "polyswarm/domain.hpp"
#include "polyswarm/http_client.hpp"

namespace polyswarm {

struct CexQuote {
  std::string symbol;
  double spot = 0.0;  // USD, > 0
  TimestampMs observed_at = 0;
};

enum class StrikeDirection { above, below };

struct StrikeContract {
  std::string market_id;
  std::string symbol;
  double strike = 0.0;
  TimestampMs expiry = 0;
  StrikeDirection direction = StrikeDirection::above;
};

struct VolatilityEstimate {
  std::string symbol;
  double sigma_hourly = 0.0;  // log-return std-dev per sqrt(hour)
  double window_hours = 0.0;
  std::size_t n_samples = 0;
};

struct PricePoint {
  TimestampMs at = 0;
  double price = 0.0;
};

// Standard normal CDF.
double std_normal_cdf(double x);

// Phi(ln(S/K) / (sigma sqrt(T))) for `above` contracts, its complement for
// `below`; T is hours from `now` to expiry. No drift term is applied.
// Throws ExpiredError when T <= 0 and DegenerateVolError when sigma is zero,
// except that allow_degenerate with S != K returns the 0/1 limit.
Probability cex_implied_probability(const CexQuote& quote, const StrikeContract& contract,
                                    const VolatilityEstimate& vol, TimestampMs now, bool allow_degenerate = false);

// Uses the samples inside the trailing window ending at the last sample.
// Per-sqrt-hour std-dev of log returns (demeaned when there are at least two
// returns) scaled by the mean sampling interval. Throws VolEstimateError with
// fewer than two samples in the window.
VolatilityEstimate realized_volatility(std::span<const PricePoint> series, double window_hours,
                                       std::string symbol = {});

// Signal iff |p_cex - p_poly| > threshold.
std::optional<ArbitrageSignal> latency_signal(Probability p_cex, Probability p_poly, double threshold,
                                              std::string market_id = {}, TimestampMs now = 0);

// market_id -> {symbol, strike, direction}; expiry is filled from the market.
std::map<std::string, StrikeContract> load_strike_map(const std::string& path);

// Source of CEX spot quotes with a rolling history for volatility estimates.
class QuoteFeed {
 public:
  virtual ~QuoteFeed() = default;
  // Brings the feed up to `now` (a poll for live feeds, a cursor move for replays).
  virtual void refresh(TimestampMs now) = 0;
  virtual std::optional<CexQuote> latest(const std::string& symbol) const = 0;
  virtual std::vector<PricePoint> history(const std::string& symbol) const = 0;
};

// Line-delimited JSON {symbol, spot, observed_at}; only quotes observed at or
// before the refresh time are visible.
class ReplayQuoteFeed final : public QuoteFeed {
 public:
  explicit ReplayQuoteFeed(const std::string& path);
  void refresh(TimestampMs now) override;
  std::optional<CexQuote> latest(const std::string& symbol) const override;
  std::vector<PricePoint> history(const std::string& symbol) const override;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::vector<PricePoint>> all_;
  TimestampMs now_ = 0;
};

// Polls GET <url_template with {symbol} replaced> -> {"price": ...}. Polls run
// on a background thread every `interval` once start() is called; refresh()
// performs a synchronous poll. One request in flight per symbol.
class HttpQuoteFeed final : public QuoteFeed {
 public:
  HttpQuoteFeed(std::string url_template, std::vector<std::string> symbols, std::shared_ptr<HttpClient> client,
                const Clock& clock, std::chrono::milliseconds interval, std::size_t max_history = 20000);
  ~HttpQuoteFeed() override;

  void start();
  void stop();
  void refresh(TimestampMs now) override;
  std::optional<CexQuote> latest(const std::string& symbol) const override;
  std::vector<PricePoint> history(const std::string& symbol) const override;
  std::size_t failed_polls() const;

 private:
  void poll_all();

  std::string url_template_;
  std::vector<std::string> symbols_;
  std::shared_ptr<HttpClient> client_;
  const Clock& clock_;
  std::chrono::milliseconds interval_;
  std::size_t max_history_;
  mutable std::mutex mu_;
  std::mutex poll_mu_;
  std::map<std::string, std::vector<PricePoint>> history_;
  std::size_t failed_polls_ = 0;
  std::jthread poller_;
};

}  // namespace polyswarm
