#include "polyswarm/domain.hpp"

#include <cctype>
#include <cmath>
#include <string>

#include "polyswarm/errors.hpp"

namespace polyswarm {

Probability::Probability(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw ValidationError("probability out of range [0,1]: " + std::to_string(value));
  }
}

NetOdds::NetOdds(double b) : b_(b) {
  if (!(b > 0.0) || !std::isfinite(b)) {
    throw DegenerateOddsError("net odds must be finite and > 0, got " + std::to_string(b));
  }
}

BinaryDistribution::BinaryDistribution(Probability p_yes, Probability p_no) : yes_(p_yes), no_(p_no) {
  if (std::abs(p_yes.value() + p_no.value() - 1.0) > kProbabilityTolerance) {
    throw ValidationError("binary distribution masses do not sum to 1");
  }
}

std::string_view to_string(Category c) {
  switch (c) {
    case Category::politics: return "politics";
    case Category::economics: return "economics";
    case Category::crypto: return "crypto";
    case Category::sports: return "sports";
    case Category::science: return "science";
    case Category::other: return "other";
  }
  return "other";
}

Category category_from_string(std::string_view s) {
  std::string lower(s);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "politics" || lower == "elections") return Category::politics;
  if (lower == "economics" || lower == "economy" || lower == "finance") return Category::economics;
  if (lower == "crypto" || lower == "cryptocurrency") return Category::crypto;
  if (lower == "sports") return Category::sports;
  if (lower == "science" || lower == "tech" || lower == "health") return Category::science;
  return Category::other;
}

std::string_view to_string(VolumeBasis b) {
  return b == VolumeBasis::trailing_24h ? "trailing_24h" : "total";
}

std::string_view to_string(Side s) { return s == Side::buy_yes ? "buy_yes" : "buy_no"; }

Side side_from_string(std::string_view s) {
  if (s == "buy_yes") return Side::buy_yes;
  if (s == "buy_no") return Side::buy_no;
  throw ValidationError("unknown side: " + std::string(s));
}

Probability probability_from_price(double price) {
  if (!(price > 0.0 && price < 1.0)) {
    throw ValidationError("price must lie strictly inside (0,1): " + std::to_string(price));
  }
  return Probability(price);
}

NetOdds net_odds_from_price(Probability price) {
  const double q = price.value();
  if (q <= 0.0 || q >= 1.0) {
    throw DegenerateOddsError("no finite odds at price " + std::to_string(q));
  }
  return NetOdds((1.0 - q) / q);
}

bool approx_equal(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace polyswarm
