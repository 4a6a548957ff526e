#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "polyswarm/config.hpp"
#include "polyswarm/domain.hpp"
#include "polyswarm/json_codec.hpp"

namespace polyswarm::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("polyswarm-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline constexpr TimestampMs kT0 = 1730764800000;  // 2024-11-05T00:00:00Z

inline MarketSnapshot make_market(std::string id, double yes_price, double volume = 5000.0,
                                  std::string title = {}) {
  MarketSnapshot m;
  m.market_id = id;
  m.title = title.empty() ? "Will event " + id + " happen?" : std::move(title);
  m.yes_price = Probability(yes_price);
  m.volume_usdc = volume;
  m.liquidity_usdc = 1000.0;
  m.category = Category::other;
  m.expiry = kT0 + 30 * kMsPerDay;
  m.observed_at = kT0;
  return m;
}

inline std::string fixture_line(const MarketSnapshot& m) { return Json(m).dump(); }

inline void write_fixture(const std::string& path, const std::vector<MarketSnapshot>& markets) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& m : markets) out << fixture_line(m) << '\n';
}

// Deterministic synthetic fixture: `cycles` batches of `markets` markets each,
// observed one interval apart, with a hidden truth per market and a price
// that is the truth seen through logit noise.
struct SyntheticFixture {
  std::size_t markets = 40;
  std::size_t cycles = 5;
  TimestampMs interval_ms = 5000;
  std::uint64_t seed = 7;
  double market_noise = 0.3;
};

std::vector<MarketSnapshot> synthetic_markets(const SyntheticFixture& spec);
void write_synthetic_fixture(const std::string& path, const SyntheticFixture& spec);

// Config for an offline engine writing into `dir`.
AppConfig offline_config(const TempDir& dir, const std::string& fixture_path);

}  // namespace polyswarm::testing
