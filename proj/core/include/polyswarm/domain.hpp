#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "polyswarm/clock.hpp"

namespace polyswarm {

constexpr double kProbabilityTolerance = 1e-12;

// A probability in [0, 1]. Construction outside the range throws
// ValidationError, so every Probability in flight is valid.
class Probability {
 public:
  constexpr Probability() = default;
  explicit Probability(double value);

  constexpr double value() const noexcept { return value_; }
  Probability complement() const { return Probability(1.0 - value_); }

  friend constexpr bool operator==(Probability a, Probability b) = default;
  friend constexpr auto operator<=>(Probability a, Probability b) = default;

 private:
  double value_ = 0.0;
};

// Profit per unit stake on a win. Always strictly positive.
class NetOdds {
 public:
  explicit NetOdds(double b);
  constexpr double value() const noexcept { return b_; }

 private:
  double b_;
};

enum class Category { politics, economics, crypto, sports, science, other };

std::string_view to_string(Category c);
// Unknown names map to Category::other.
Category category_from_string(std::string_view s);

// Which API field produced the activity figure used for filtering.
enum class VolumeBasis { trailing_24h, total };

std::string_view to_string(VolumeBasis b);

struct MarketSnapshot {
  std::string market_id;
  std::string title;
  Probability yes_price;
  double volume_usdc = 0.0;
  double liquidity_usdc = 0.0;
  Category category = Category::other;
  TimestampMs expiry = 0;
  TimestampMs observed_at = 0;
  VolumeBasis volume_basis = VolumeBasis::total;
  // Hidden probability used only by the simulated inference provider.
  std::optional<double> sim_truth;

  bool tradable() const { return yes_price.value() > 0.0 && yes_price.value() < 1.0; }
};

class BinaryDistribution {
 public:
  explicit BinaryDistribution(Probability p_yes) : yes_(p_yes), no_(p_yes.complement()) {}
  // Both masses are given explicitly; they must sum to one within tolerance.
  BinaryDistribution(Probability p_yes, Probability p_no);

  Probability p_yes() const noexcept { return yes_; }
  Probability p_no() const noexcept { return no_; }

 private:
  Probability yes_;
  Probability no_;
};

enum class Side { buy_yes, buy_no };

std::string_view to_string(Side s);
Side side_from_string(std::string_view s);

// Throws ValidationError unless 0 < price < 1.
Probability probability_from_price(double price);

// b = (1 - price) / price for buying a share at `price`. Throws
// DegenerateOddsError at price 0 or 1.
NetOdds net_odds_from_price(Probability price);

// Price paid for one share on the given side.
inline Probability side_price(Side side, Probability yes_price) {
  return side == Side::buy_yes ? yes_price : yes_price.complement();
}

bool approx_equal(double a, double b, double tol = kProbabilityTolerance);

}  // namespace polyswarm
