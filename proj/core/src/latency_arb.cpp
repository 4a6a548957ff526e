#include "polyswarm/latency_arb.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <numbers>

#include "polyswarm/errors.hpp"
#include "polyswarm/json_codec.hpp"

namespace polyswarm {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

Probability cex_implied_probability(const CexQuote& quote, const StrikeContract& contract,
                                    const VolatilityEstimate& vol, TimestampMs now, bool allow_degenerate) {
  if (!(quote.spot > 0.0)) throw ValidationError("spot must be > 0");
  if (!(contract.strike > 0.0)) throw ValidationError("strike must be > 0");
  if (!(vol.sigma_hourly >= 0.0)) throw ValidationError("volatility must be >= 0");
  const double hours = static_cast<double>(contract.expiry - now) / static_cast<double>(kMsPerHour);
  if (!(hours > 0.0)) throw ExpiredError("contract " + contract.market_id + " has expired");

  const double log_moneyness = std::log(quote.spot / contract.strike);
  double p_above = 0.0;
  if (vol.sigma_hourly == 0.0) {
    if (!allow_degenerate || log_moneyness == 0.0) {
      throw DegenerateVolError("zero volatility for " + contract.symbol);
    }
    p_above = log_moneyness > 0.0 ? 1.0 : 0.0;
  } else {
    p_above = std_normal_cdf(log_moneyness / (vol.sigma_hourly * std::sqrt(hours)));
  }
  return Probability(contract.direction == StrikeDirection::above ? p_above : 1.0 - p_above);
}

VolatilityEstimate realized_volatility(std::span<const PricePoint> series, double window_hours, std::string symbol) {
  if (!(window_hours > 0.0)) throw VolEstimateError("window must be positive");
  if (series.empty()) throw VolEstimateError("no samples");
  const TimestampMs end = series.back().at;
  const auto start = end - static_cast<TimestampMs>(window_hours * static_cast<double>(kMsPerHour));
  std::vector<PricePoint> window;
  for (const auto& p : series) {
    if (p.at >= start && p.at <= end) window.push_back(p);
  }
  if (window.size() < 2) throw VolEstimateError("need at least two samples inside the window");

  std::vector<double> returns;
  returns.reserve(window.size() - 1);
  for (std::size_t i = 1; i < window.size(); ++i) {
    if (!(window[i].price > 0.0) || !(window[i - 1].price > 0.0)) throw VolEstimateError("non-positive price");
    returns.push_back(std::log(window[i].price / window[i - 1].price));
  }
  const double span_hours = static_cast<double>(window.back().at - window.front().at) / kMsPerHour;
  if (!(span_hours > 0.0)) throw VolEstimateError("samples share one timestamp");
  const double dt = span_hours / static_cast<double>(returns.size());

  double variance = 0.0;
  if (returns.size() >= 2) {
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= static_cast<double>(returns.size());
    for (double r : returns) variance += (r - mean) * (r - mean);
    variance /= static_cast<double>(returns.size() - 1);
  } else {
    variance = returns.front() * returns.front();
  }
  return VolatilityEstimate{std::move(symbol), std::sqrt(variance / dt), window_hours, window.size()};
}

std::optional<ArbitrageSignal> latency_signal(Probability p_cex, Probability p_poly, double threshold,
                                              std::string market_id, TimestampMs now) {
  const double gap = std::abs(p_cex.value() - p_poly.value());
  if (!(gap > threshold)) return std::nullopt;
  ArbitrageSignal s;
  s.kind = SignalKind::latency;
  s.market_ids = {std::move(market_id)};
  s.magnitude = gap;
  s.direction = p_cex > p_poly ? SignalDirection::buy_yes : SignalDirection::buy_no;
  s.detected_at = now;
  return s;
}

std::map<std::string, StrikeContract> load_strike_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open strike map: " + path);
  std::map<std::string, StrikeContract> out;
  try {
    const auto j = Json::parse(in);
    for (const auto& [market_id, spec] : j.items()) {
      StrikeContract c;
      c.market_id = market_id;
      c.symbol = spec.at("symbol").get<std::string>();
      c.strike = number_from_json(spec.at("strike"));
      const auto dir = spec.value("direction", std::string("above"));
      if (dir != "above" && dir != "below") throw ConfigError("strike direction must be above or below");
      c.direction = dir == "above" ? StrikeDirection::above : StrikeDirection::below;
      if (!(c.strike > 0.0)) throw ConfigError("strike must be > 0 for " + market_id);
      out.emplace(market_id, std::move(c));
    }
  } catch (const Json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return out;
}

// ---------------------------------------------------------------- replay feed

ReplayQuoteFeed::ReplayQuoteFeed(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open quote replay file: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = Json::parse(line);
      const double spot = number_from_json(j.at("spot"));
      if (!(spot > 0.0)) throw ValidationError("spot must be > 0");
      all_[j.at("symbol").get<std::string>()].push_back({timestamp_from_json(j.at("observed_at")), spot});
    } catch (const std::exception& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (auto& [sym, pts] : all_) {
    std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.at < b.at; });
  }
}

void ReplayQuoteFeed::refresh(TimestampMs now) {
  std::lock_guard lock(mu_);
  now_ = now;
}

std::vector<PricePoint> ReplayQuoteFeed::history(const std::string& symbol) const {
  std::lock_guard lock(mu_);
  auto it = all_.find(symbol);
  if (it == all_.end()) return {};
  std::vector<PricePoint> out;
  for (const auto& p : it->second) {
    if (p.at > now_) break;
    out.push_back(p);
  }
  return out;
}

std::optional<CexQuote> ReplayQuoteFeed::latest(const std::string& symbol) const {
  const auto h = history(symbol);
  if (h.empty()) return std::nullopt;
  return CexQuote{symbol, h.back().price, h.back().at};
}

// ---------------------------------------------------------------- http feed

HttpQuoteFeed::HttpQuoteFeed(std::string url_template, std::vector<std::string> symbols,
                             std::shared_ptr<HttpClient> client, const Clock& clock,
                             std::chrono::milliseconds interval, std::size_t max_history)
    : url_template_(std::move(url_template)),
      symbols_(std::move(symbols)),
      client_(std::move(client)),
      clock_(clock),
      interval_(interval),
      max_history_(max_history) {}

HttpQuoteFeed::~HttpQuoteFeed() { stop(); }

void HttpQuoteFeed::start() {
  if (poller_.joinable()) return;
  poller_ = std::jthread([this](std::stop_token st) {
    std::mutex m;
    std::condition_variable_any cv;
    while (!st.stop_requested()) {
      poll_all();
      std::unique_lock lock(m);
      cv.wait_for(lock, st, interval_, [] { return false; });
    }
  });
}

void HttpQuoteFeed::stop() {
  if (poller_.joinable()) {
    poller_.request_stop();
    poller_.join();
  }
}

void HttpQuoteFeed::refresh(TimestampMs) {
  if (!poller_.joinable()) poll_all();
}

void HttpQuoteFeed::poll_all() {
  std::lock_guard poll_lock(poll_mu_);
  for (const auto& symbol : symbols_) {
    std::string url = url_template_;
    if (auto pos = url.find("{symbol}"); pos != std::string::npos) url.replace(pos, 8, symbol);
    try {
      const auto res = client_->get(url, {}, std::chrono::milliseconds(5000));
      if (res.status < 200 || res.status >= 300) throw TransportError("HTTP " + std::to_string(res.status));
      const double price = number_from_json(Json::parse(res.body).at("price"));
      if (!(price > 0.0)) throw ValidationError("non-positive price");
      std::lock_guard lock(mu_);
      auto& h = history_[symbol];
      h.push_back({clock_.now(), price});
      if (h.size() > max_history_) h.erase(h.begin(), h.begin() + static_cast<long>(h.size() - max_history_));
    } catch (const std::exception&) {
      std::lock_guard lock(mu_);
      ++failed_polls_;
    }
  }
}

std::optional<CexQuote> HttpQuoteFeed::latest(const std::string& symbol) const {
  std::lock_guard lock(mu_);
  auto it = history_.find(symbol);
  if (it == history_.end() || it->second.empty()) return std::nullopt;
  return CexQuote{symbol, it->second.back().price, it->second.back().at};
}

std::vector<PricePoint> HttpQuoteFeed::history(const std::string& symbol) const {
  std::lock_guard lock(mu_);
  auto it = history_.find(symbol);
  return it == history_.end() ? std::vector<PricePoint>{} : it->second;
}

std::size_t HttpQuoteFeed::failed_polls() const {
  std::lock_guard lock(mu_);
  return failed_polls_;
}

}  // namespace polyswarm
