#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polyswarm/domain.hpp"
#include "polyswarm/json_codec.hpp"

namespace polyswarm {

enum class ForecastSource { swarm, combined, market, agent };

std::string_view to_string(ForecastSource s);
ForecastSource forecast_source_from_string(std::string_view s);

struct ForecastRecord {
  std::string market_id;
  Probability forecast;  // f_t at decision time
  int outcome = 0;       // o_t in {0, 1}
  ForecastSource source = ForecastSource::combined;
  std::string persona_id;  // set when source == agent
};

constexpr double kLogLossEpsilon = 1e-12;

// Mean squared error against outcomes. Throws EmptyEvalError on no records.
double brier_score(std::span<const ForecastRecord> records);

// Negative mean log-likelihood with forecasts clamped to [eps, 1 - eps].
double log_loss(std::span<const ForecastRecord> records, double epsilon = kLogLossEpsilon);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  std::optional<double> mean_forecast;          // none for empty bins
  std::optional<double> empirical_frequency;   // none for empty bins
};

struct CalibrationTable {
  std::vector<CalibrationBin> bins;
};

enum class BinningMode { equal_width, equal_mass };

// Equal-width bins partition [0,1]; a forecast of exactly 1 lands in the last
// bin. Equal-mass bins split the sorted forecasts into groups of (nearly)
// equal size. Throws ValidationError when n_bins < 2.
CalibrationTable reliability_bins(std::span<const ForecastRecord> records, std::size_t n_bins,
                                  BinningMode mode = BinningMode::equal_width);

struct AgentScore {
  double brier = 0.0;
  double log_loss = 0.0;
  std::size_t n = 0;
};

// Groups agent-sourced records by persona_id; personas without records are absent.
std::map<std::string, AgentScore> per_agent_scores(std::span<const ForecastRecord> records);

void to_json(Json& j, const CalibrationTable& t);
std::string calibration_csv(const CalibrationTable& t);

}  // namespace polyswarm
