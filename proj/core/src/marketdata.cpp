#include "polyswarm/marketdata.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <utility>

#include "polyswarm/errors.hpp"
#include "polyswarm/json_codec.hpp"

namespace polyswarm {

MarketSource MarketSource::parse(const std::string& spec) {
  MarketSource s;
  if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) {
    s.kind = Kind::http_api;
    s.endpoint_or_path = spec;
  } else if (spec.rfind("fixture:", 0) == 0) {
    s.endpoint_or_path = spec.substr(8);
  } else {
    s.endpoint_or_path = spec;
  }
  if (s.endpoint_or_path.empty()) throw ConfigError("MARKET_SOURCE is empty");
  return s;
}

MarketSnapshot parse_fixture_record(const std::string& line, std::size_t line_no) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), "line " + std::to_string(line_no));
  }
  std::string id = "line " + std::to_string(line_no);
  if (j.is_object()) {
    if (auto it = j.find("market_id"); it != j.end() && it->is_string()) id = it->get<std::string>();
  }
  try {
    return j.get<MarketSnapshot>();
  } catch (const std::exception& e) {
    throw ParseError(e.what(), id);
  }
}

FixtureMarketFeed::FixtureMarketFeed(std::string path) {
  std::ifstream in(path);
  if (!in) throw SourceUnavailable("cannot open market fixture: " + path);
  std::map<TimestampMs, FetchResult> groups;
  std::vector<RecordError> errors;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto snap = parse_fixture_record(line, line_no);
      if (!snap.tradable()) {
        ++groups[snap.observed_at].skipped;
        continue;
      }
      const auto at = snap.observed_at;
      groups[at].markets.push_back(std::move(snap));
    } catch (const ParseError& e) {
      errors.push_back({e.context(), e.what()});
    }
  }
  for (auto& [at, batch] : groups) batches_.push_back(std::move(batch));
  if (batches_.empty()) batches_.emplace_back();
  // Malformed records cannot be placed in time; report them with the first batch.
  batches_.front().errors = std::move(errors);
}

FetchResult FixtureMarketFeed::fetch() {
  std::lock_guard lock(mu_);
  const std::size_t idx = std::min(cursor_, batches_.size() - 1);
  ++cursor_;
  return batches_[idx];
}

TimestampMs FixtureMarketFeed::first_observed_at() const {
  if (batches_.empty() || batches_.front().markets.empty()) return 0;
  return batches_.front().markets.front().observed_at;
}

namespace {

std::optional<double> optional_number(const Json& rec, const char* key) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) return std::nullopt;
  return number_from_json(*it);
}

// outcomePrices arrives either as a JSON array or as a string holding one.
std::vector<double> outcome_prices(const Json& rec) {
  auto it = rec.find("outcomePrices");
  if (it == rec.end() || it->is_null()) return {};
  Json arr = it->is_string() ? Json::parse(it->get<std::string>()) : *it;
  std::vector<double> out;
  for (const auto& v : arr) out.push_back(number_from_json(v));
  return out;
}

}  // namespace

FetchResult parse_market_api_payload(const std::string& body, PriceBasis basis, TimestampMs observed_at) {
  Json payload;
  try {
    payload = Json::parse(body);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("market payload is not JSON: ") + e.what(), "payload");
  }
  if (payload.is_object() && payload.contains("data")) payload = payload["data"];
  if (!payload.is_array()) throw ParseError("market payload is not an array", "payload");

  FetchResult out;
  std::size_t index = 0;
  for (const auto& rec : payload) {
    std::string id = "index " + std::to_string(index++);
    try {
      if (!rec.is_object()) throw ValidationError("record is not an object");
      if (auto it = rec.find("id"); it != rec.end()) id = it->is_string() ? it->get<std::string>() : it->dump();
      if (rec.value("closed", false) || !rec.value("active", true)) {
        ++out.skipped;
        continue;
      }
      const auto prices = outcome_prices(rec);
      if (prices.size() != 2) {
        ++out.skipped;  // categorical or unpriced market
        continue;
      }
      double yes = prices[0];
      if (basis == PriceBasis::mid) {
        const auto bid = optional_number(rec, "bestBid");
        const auto ask = optional_number(rec, "bestAsk");
        if (bid && ask && *bid > 0 && *ask > 0) yes = 0.5 * (*bid + *ask);
      } else if (const auto last = optional_number(rec, "lastTradePrice"); last && *last > 0) {
        yes = *last;
      }
      if (!(yes > 0.0 && yes < 1.0)) {
        ++out.skipped;
        continue;
      }
      MarketSnapshot m;
      m.market_id = id;
      m.title = rec.at("question").get<std::string>();
      m.yes_price = Probability(yes);
      if (const auto v24 = optional_number(rec, "volume24hr")) {
        m.volume_usdc = *v24;
        m.volume_basis = VolumeBasis::trailing_24h;
      } else {
        m.volume_usdc = number_from_json(rec.at("volume"));
        m.volume_basis = VolumeBasis::total;
      }
      m.liquidity_usdc = optional_number(rec, "liquidity").value_or(0.0);
      m.category = category_from_string(rec.value("category", std::string("other")));
      m.expiry = parse_iso8601(rec.at("endDate").get<std::string>());
      m.observed_at = observed_at;
      if (m.volume_usdc < 0 || m.liquidity_usdc < 0) throw ValidationError("negative volume or liquidity");
      out.markets.push_back(std::move(m));
    } catch (const std::exception& e) {
      out.errors.push_back({id, e.what()});
    }
  }
  return out;
}

HttpMarketFeed::HttpMarketFeed(MarketSource source, std::shared_ptr<HttpClient> client, const Clock& clock)
    : source_(std::move(source)), client_(std::move(client)), clock_(clock) {}

FetchResult HttpMarketFeed::fetch() {
  std::lock_guard lock(mu_);
  std::string base = source_.endpoint_or_path;
  while (!base.empty() && base.back() == '/') base.pop_back();
  const std::string url = base + "/markets?active=true&closed=false&limit=" + std::to_string(source_.limit);
  HttpResponse res;
  try {
    res = client_->get(url, {}, source_.poll_timeout);
  } catch (const TransportError& e) {
    throw SourceUnavailable(e.what());
  }
  if (res.status < 200 || res.status >= 300) {
    throw SourceUnavailable("market API returned HTTP " + std::to_string(res.status));
  }
  return parse_market_api_payload(res.body, source_.price_basis, clock_.now());
}

std::unique_ptr<MarketFeed> make_market_feed(const MarketSource& source, const Clock& clock,
                                             std::shared_ptr<HttpClient> client) {
  if (source.kind == MarketSource::Kind::fixture_file) {
    return std::make_unique<FixtureMarketFeed>(source.endpoint_or_path);
  }
  if (!client) client = make_http_client();
  return std::make_unique<HttpMarketFeed>(source, std::move(client), clock);
}

FetchResult fetch_active_markets(MarketFeed& feed) { return feed.fetch(); }

std::vector<MarketSnapshot> filter_markets(std::span<const MarketSnapshot> markets, const MarketFilter& filter,
                                           TimestampMs now) {
  std::vector<MarketSnapshot> out;
  for (const auto& m : markets) {
    if (m.volume_usdc < filter.min_volume_usdc) continue;
    if (m.liquidity_usdc < filter.min_liquidity_usdc) continue;
    if (filter.max_hours_to_expiry) {
      const double hours = static_cast<double>(m.expiry - now) / static_cast<double>(kMsPerHour);
      if (hours > *filter.max_hours_to_expiry) continue;
    }
    if (filter.categories && !filter.categories->contains(m.category)) continue;
    out.push_back(m);
  }
  return out;
}

}  // namespace polyswarm
