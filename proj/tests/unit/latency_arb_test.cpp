#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fake_http.hpp"
#include "polyswarm/errors.hpp"
#include "polyswarm/latency_arb.hpp"
#include "test_support.hpp"

using namespace polyswarm;

namespace {

// Phi(x) = 1/2 + integral_0^x phi(t) dt by composite Simpson.
double quadrature_cdf(double x) {
  const int n = 20000;
  const double h = x / n;
  const auto phi = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); };
  double s = phi(0.0) + phi(x);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * phi(i * h);
  return 0.5 + s * h / 3.0;
}

StrikeContract contract(double strike, double hours, StrikeDirection dir = StrikeDirection::above) {
  return StrikeContract{"m", "BTC", strike, static_cast<TimestampMs>(hours * kMsPerHour), dir};
}

VolatilityEstimate vol(double sigma) { return VolatilityEstimate{"BTC", sigma, 24.0, 100}; }

CexQuote quote(double spot) { return CexQuote{"BTC", spot, 0}; }

}  // namespace

TEST_SUITE("latency_arb") {

TEST_CASE("normal cdf") {
  CHECK(std_normal_cdf(0.0) == 0.5);
  for (double x : {0.1, 0.5, 1.0, 1.96, 3.0, 6.0}) {
    CHECK(std::abs(std_normal_cdf(-x) - (1.0 - std_normal_cdf(x))) <= 1e-15);
  }
  CHECK(std::abs(std_normal_cdf(1.0) - quadrature_cdf(1.0)) <= 1e-9);
  for (double x = -8.0; x <= 8.0; x += 0.25) CHECK(std::abs(std_normal_cdf(x) - quadrature_cdf(x)) <= 1e-9);
}

TEST_CASE("at the money is one half") {
  for (double sigma : {0.001, 0.01, 0.3}) {
    for (double hours : {0.5, 10.0, 1000.0}) {
      CHECK(cex_implied_probability(quote(100), contract(100, hours), vol(sigma), 0).value() == 0.5);
    }
  }
}

TEST_CASE("worked example agrees with simulation") {
  const double p = cex_implied_probability(quote(110), contract(100, 100), vol(0.01), 0).value();
  CHECK(p == doctest::Approx(std_normal_cdf(std::log(1.1) / 0.1)).epsilon(1e-14));
  // ln S_T = ln S + sigma sqrt(T) Z, the driftless log-normal the formula assumes
  std::mt19937_64 rng(41);
  std::normal_distribution<double> z(0.0, 1.0);
  const int paths = 1000000;
  int above = 0;
  for (int i = 0; i < paths; ++i) above += 110.0 * std::exp(0.01 * 10.0 * z(rng)) > 100.0;
  CHECK(std::abs(p - static_cast<double>(above) / paths) <= 0.005);

  const double below = cex_implied_probability(quote(110), contract(100, 100, StrikeDirection::below), vol(0.01), 0).value();
  CHECK(below == doctest::Approx(1.0 - p).epsilon(1e-15));
  CHECK(p + below == 1.0);
}

TEST_CASE("monotonicity and limits") {
  double prev = 0.0;
  for (double s = 80; s <= 120; s += 1) {
    const double p = cex_implied_probability(quote(s), contract(100, 24), vol(0.02), 0).value();
    CHECK(p >= prev);
    prev = p;
  }
  prev = 1.0;
  for (double k = 80; k <= 120; k += 1) {
    const double p = cex_implied_probability(quote(100), contract(k, 24), vol(0.02), 0).value();
    CHECK(p <= prev);
    prev = p;
  }
  CHECK(cex_implied_probability(quote(100.0001), contract(100, 24), vol(0.02), 0).value() ==
        doctest::Approx(0.5).epsilon(1e-4));
  const auto tiny = contract(100, 1e-6);
  CHECK(cex_implied_probability(quote(101), tiny, vol(0.02), 0).value() > 0.999999);
  CHECK(cex_implied_probability(quote(99), tiny, vol(0.02), 0).value() < 1e-6);
}

TEST_CASE("expired and degenerate inputs") {
  CHECK_THROWS_AS(cex_implied_probability(quote(100), contract(100, 0), vol(0.02), 0), ExpiredError);
  CHECK_THROWS_AS(cex_implied_probability(quote(100), contract(100, 1), vol(0.02), 2 * kMsPerHour), ExpiredError);
  CHECK_THROWS_AS(cex_implied_probability(quote(110), contract(100, 24), vol(0.0), 0), DegenerateVolError);
  CHECK(cex_implied_probability(quote(110), contract(100, 24), vol(0.0), 0, true).value() == 1.0);
  CHECK(cex_implied_probability(quote(90), contract(100, 24), vol(0.0), 0, true).value() == 0.0);
  CHECK_THROWS_AS(cex_implied_probability(quote(100), contract(100, 24), vol(0.0), 0, true), DegenerateVolError);
}

TEST_CASE("realized volatility") {
  std::vector<PricePoint> flat;
  for (int i = 0; i < 10; ++i) flat.push_back({i * 60000LL, 100.0});
  CHECK(realized_volatility(flat, 24).sigma_hourly == 0.0);
  CHECK_THROWS_AS(realized_volatility(std::vector<PricePoint>{{0, 100.0}}, 24), VolEstimateError);
  CHECK_THROWS_AS(realized_volatility(std::vector<PricePoint>{}, 24), VolEstimateError);

  // GBM with sigma* = 0.02 per sqrt(hour), one-minute steps
  const double sigma = 0.02;
  const double dt = 1.0 / 60.0;
  std::mt19937_64 rng(42);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<PricePoint> gbm;
  double price = 30000.0;
  for (int i = 0; i < 10000; ++i) {
    gbm.push_back({i * 60000LL, price});
    price *= std::exp(-0.5 * sigma * sigma * dt + sigma * std::sqrt(dt) * z(rng));
  }
  const auto est = realized_volatility(gbm, 10000.0 / 60.0 + 1.0, "BTC");
  CHECK(std::abs(est.sigma_hourly - sigma) / sigma <= 0.05);
  CHECK(est.n_samples == 10000);

  // the window keeps only the trailing samples
  const auto recent = realized_volatility(gbm, 1.0);
  CHECK(recent.n_samples == 61);
}

TEST_CASE("latency signal") {
  CHECK(!latency_signal(Probability(0.65), Probability(0.65), 0.10));
  const auto s = latency_signal(Probability(0.80), Probability(0.65), 0.10, "m", 3);
  REQUIRE(s);
  CHECK(s->direction == SignalDirection::buy_yes);
  CHECK(s->magnitude == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(s->kind == SignalKind::latency);
  CHECK(!latency_signal(Probability(0.70), Probability(0.65), 0.10));
  CHECK(latency_signal(Probability(0.40), Probability(0.65), 0.10)->direction == SignalDirection::buy_no);
}

TEST_CASE("strike map file") {
  testing::TempDir dir;
  const auto path = dir.file("strikes.json");
  testing::write_text(path, R"({"m1": {"symbol": "BTC", "strike": 100000, "direction": "above"},
                                "m2": {"symbol": "ETH", "strike": "3500", "direction": "below"}})");
  const auto map = load_strike_map(path);
  CHECK(map.at("m1").strike == 100000);
  CHECK(map.at("m2").direction == StrikeDirection::below);
  testing::write_text(path, R"({"m1": {"symbol": "BTC", "strike": -1}})");
  CHECK_THROWS_AS(load_strike_map(path), ConfigError);
}

TEST_CASE("replay quote feed only reveals the past") {
  testing::TempDir dir;
  const auto path = dir.file("quotes.jsonl");
  testing::write_text(path,
                      "{\"symbol\":\"BTC\",\"spot\":100,\"observed_at\":1000}\n"
                      "{\"symbol\":\"BTC\",\"spot\":101,\"observed_at\":2000}\n"
                      "{\"symbol\":\"ETH\",\"spot\":10,\"observed_at\":1500}\n");
  ReplayQuoteFeed feed(path);
  feed.refresh(500);
  CHECK(!feed.latest("BTC"));
  feed.refresh(1500);
  CHECK(feed.latest("BTC")->spot == 100);
  CHECK(feed.history("BTC").size() == 1);
  feed.refresh(5000);
  CHECK(feed.latest("BTC")->spot == 101);
  CHECK(feed.history("BTC").size() == 2);
  CHECK(feed.latest("ETH")->spot == 10);
}

TEST_CASE("http quote feed polls the template url") {
  testing::FakeHttpServer fake;
  fake.server().Get(R"(/ticker/(\w+))", [](const httplib::Request& req, httplib::Response& res) {
    if (req.matches[1] == "BTC") {
      res.set_content(R"({"price": "65000.5"})", "application/json");
    } else {
      res.status = 500;
    }
  });
  fake.start();
  ManualClock clock(77);
  HttpQuoteFeed feed(fake.base_url() + "/ticker/{symbol}", {"BTC", "ETH"}, make_http_client(), clock,
                     std::chrono::milliseconds(1000));
  feed.refresh(77);
  REQUIRE(feed.latest("BTC"));
  CHECK(feed.latest("BTC")->spot == 65000.5);
  CHECK(feed.latest("BTC")->observed_at == 77);
  CHECK(!feed.latest("ETH"));
  CHECK(feed.failed_polls() == 1);
}

}
