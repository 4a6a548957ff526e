#include "polyswarm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "polyswarm/errors.hpp"

namespace polyswarm {

std::string_view to_string(ForecastSource s) {
  switch (s) {
    case ForecastSource::swarm: return "swarm";
    case ForecastSource::combined: return "combined";
    case ForecastSource::market: return "market";
    case ForecastSource::agent: return "agent";
  }
  return "combined";
}

ForecastSource forecast_source_from_string(std::string_view s) {
  for (auto v : {ForecastSource::swarm, ForecastSource::combined, ForecastSource::market, ForecastSource::agent}) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError("unknown forecast source: " + std::string(s));
}

namespace {

void check_outcomes(std::span<const ForecastRecord> records) {
  if (records.empty()) throw EmptyEvalError("no resolved forecasts to score");
  for (const auto& r : records) {
    if (r.outcome != 0 && r.outcome != 1) throw ValidationError("outcome must be 0 or 1 for " + r.market_id);
  }
}

}  // namespace

double brier_score(std::span<const ForecastRecord> records) {
  check_outcomes(records);
  double sum = 0.0;
  for (const auto& r : records) {
    const double d = r.forecast.value() - static_cast<double>(r.outcome);
    sum += d * d;
  }
  return sum / static_cast<double>(records.size());
}

double log_loss(std::span<const ForecastRecord> records, double epsilon) {
  check_outcomes(records);
  double sum = 0.0;
  for (const auto& r : records) {
    const double f = std::clamp(r.forecast.value(), epsilon, 1.0 - epsilon);
    sum += r.outcome == 1 ? std::log(f) : std::log1p(-f);
  }
  return -sum / static_cast<double>(records.size());
}

CalibrationTable reliability_bins(std::span<const ForecastRecord> records, std::size_t n_bins, BinningMode mode) {
  if (n_bins < 2) throw ValidationError("reliability_bins needs at least 2 bins");
  CalibrationTable table;
  std::vector<std::vector<const ForecastRecord*>> members(n_bins);

  if (mode == BinningMode::equal_width) {
    for (std::size_t b = 0; b < n_bins; ++b) {
      table.bins.push_back({static_cast<double>(b) / n_bins, static_cast<double>(b + 1) / n_bins, 0, {}, {}});
    }
    for (const auto& r : records) {
      auto b = static_cast<std::size_t>(r.forecast.value() * static_cast<double>(n_bins));
      members[std::min(b, n_bins - 1)].push_back(&r);
    }
  } else {
    std::vector<const ForecastRecord*> sorted;
    for (const auto& r : records) sorted.push_back(&r);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto* a, const auto* b) { return a->forecast < b->forecast; });
    for (std::size_t i = 0; i < sorted.size(); ++i) members[i * n_bins / sorted.size()].push_back(sorted[i]);
    double lower = 0.0;
    for (std::size_t b = 0; b < n_bins; ++b) {
      double upper = 1.0;
      if (b + 1 < n_bins && !members[b + 1].empty()) upper = members[b + 1].front()->forecast.value();
      table.bins.push_back({lower, upper, 0, {}, {}});
      lower = upper;
    }
  }

  for (std::size_t b = 0; b < n_bins; ++b) {
    auto& bin = table.bins[b];
    bin.count = members[b].size();
    if (bin.count == 0) continue;
    double f = 0.0, o = 0.0;
    for (const auto* r : members[b]) {
      f += r->forecast.value();
      o += r->outcome;
    }
    bin.mean_forecast = f / static_cast<double>(bin.count);
    bin.empirical_frequency = o / static_cast<double>(bin.count);
  }
  return table;
}

std::map<std::string, AgentScore> per_agent_scores(std::span<const ForecastRecord> records) {
  std::map<std::string, std::vector<ForecastRecord>> grouped;
  for (const auto& r : records) {
    if (r.source == ForecastSource::agent && !r.persona_id.empty()) grouped[r.persona_id].push_back(r);
  }
  std::map<std::string, AgentScore> out;
  for (const auto& [persona, recs] : grouped) {
    out[persona] = AgentScore{brier_score(recs), log_loss(recs), recs.size()};
  }
  return out;
}

void to_json(Json& j, const CalibrationTable& t) {
  j = Json::array();
  for (const auto& b : t.bins) {
    j.push_back(Json{{"lower", b.lower},
                     {"upper", b.upper},
                     {"count", b.count},
                     {"mean_forecast", b.mean_forecast ? Json(*b.mean_forecast) : Json(nullptr)},
                     {"empirical_frequency", b.empirical_frequency ? Json(*b.empirical_frequency) : Json(nullptr)}});
  }
}

std::string calibration_csv(const CalibrationTable& t) {
  std::ostringstream out;
  out << "lower,upper,count,mean_forecast,empirical_frequency\n";
  out.precision(10);
  for (const auto& b : t.bins) {
    out << b.lower << ',' << b.upper << ',' << b.count << ',';
    if (b.mean_forecast) out << *b.mean_forecast;
    out << ',';
    if (b.empirical_frequency) out << *b.empirical_frequency;
    out << '\n';
  }
  return out.str();
}

}  // namespace polyswarm
