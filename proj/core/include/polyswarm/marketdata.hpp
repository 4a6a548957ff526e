#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "polyswarm/clock.hpp"
#include "polyswarm/domain.hpp"
#include "polyswarm/http_client.hpp"

namespace polyswarm {

struct MarketFilter {
  double min_volume_usdc = 0.0;
  double min_liquidity_usdc = 0.0;
  std::optional<double> max_hours_to_expiry;  // unbounded when empty
  std::optional<std::set<Category>> categories;

  static MarketFilter unbounded() { return {}; }
};

// Which quoted price becomes yes_price when the API exposes several.
enum class PriceBasis { mid, last };

struct MarketSource {
  enum class Kind { http_api, fixture_file };
  Kind kind = Kind::fixture_file;
  std::string endpoint_or_path;
  std::chrono::milliseconds poll_timeout{5000};
  int limit = 500;
  PriceBasis price_basis = PriceBasis::mid;

  // "fixture:<path>" or a bare path selects a fixture file; anything starting
  // with http:// or https:// is the market API base URL.
  static MarketSource parse(const std::string& spec);
};

struct RecordError {
  std::string record_id;
  std::string message;
};

struct FetchResult {
  std::vector<MarketSnapshot> markets;
  std::vector<RecordError> errors;  // malformed records, logged and skipped
  std::size_t skipped = 0;          // well-formed but not open binary markets
};

class MarketFeed {
 public:
  virtual ~MarketFeed() = default;
  // Throws SourceUnavailable on transport failure or non-2xx status.
  virtual FetchResult fetch() = 0;
};

// Replays a line-delimited JSON fixture. Records are grouped by observed_at;
// the k-th fetch returns the k-th group (the last group repeats once the
// fixture is exhausted), so the same file always yields the same sequence.
class FixtureMarketFeed final : public MarketFeed {
 public:
  explicit FixtureMarketFeed(std::string path);
  FetchResult fetch() override;
  std::size_t batch_count() const { return batches_.size(); }
  // observed_at of the first batch; 0 for an empty fixture.
  TimestampMs first_observed_at() const;

 private:
  std::vector<FetchResult> batches_;
  std::size_t cursor_ = 0;
  std::mutex mu_;
};

class HttpMarketFeed final : public MarketFeed {
 public:
  HttpMarketFeed(MarketSource source, std::shared_ptr<HttpClient> client, const Clock& clock);
  FetchResult fetch() override;

 private:
  MarketSource source_;
  std::shared_ptr<HttpClient> client_;
  const Clock& clock_;
  std::mutex mu_;
};

std::unique_ptr<MarketFeed> make_market_feed(const MarketSource& source, const Clock& clock,
                                             std::shared_ptr<HttpClient> client = nullptr);

FetchResult fetch_active_markets(MarketFeed& feed);

// Parses one fixture line. Throws ParseError whose context is the record id
// (or "line <n>" when no id can be recovered).
MarketSnapshot parse_fixture_record(const std::string& line, std::size_t line_no);

// Parses the market API's JSON array payload, stamping observed_at.
FetchResult parse_market_api_payload(const std::string& body, PriceBasis basis, TimestampMs observed_at);

// Stable subset of `markets` satisfying every predicate; thresholds inclusive.
std::vector<MarketSnapshot> filter_markets(std::span<const MarketSnapshot> markets, const MarketFilter& filter,
                                           TimestampMs now);

}  // namespace polyswarm
