#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "polyswarm/clock.hpp"
#include "polyswarm/domain.hpp"
#include "polyswarm/json_codec.hpp"

namespace polyswarm {

struct RiskConfig {
  double kelly_multiplier = 0.25;
  double max_position_usdc = 10.0;
  double daily_loss_limit_usdc = 50.0;
  double bankroll_usdc = 1000.0;

  // Throws ConfigError unless every field is positive and the multiplier <= 1.
  void validate() const;
};

struct RiskState {
  double realized_pnl_today_usdc = 0.0;
  bool suspended = false;
  std::optional<TimestampMs> suspended_at;
  std::int64_t trading_day = 0;  // UTC day index
  // Bankroll used for sizing during this trading day.
  double day_start_bankroll_usdc = 0.0;
  // Realized PnL accumulated before the current day.
  double realized_pnl_prior_days_usdc = 0.0;
};

void to_json(Json& j, const RiskState& s);
void from_json(const Json& j, RiskState& s);

RiskState initial_risk_state(const RiskConfig& config, TimestampMs now);

// f* = (p b - (1 - p)) / b. Negative values mean the bet is unfavorable.
double kelly_fraction(Probability p, NetOdds b);

// min(max(f*, 0) * multiplier * bankroll, cap).
double position_size(double f_star, const RiskConfig& config);

// Rolls the state forward to the UTC day containing `now`; a new day resets
// the daily PnL and clears suspension.
RiskState roll_day(RiskState state, TimestampMs now);

// Adds a realized PnL delta (after rolling to `now`) and suspends when a loss
// brings the day's realized PnL to -daily_loss_limit or below. Suspension
// sticks until day rollover or operator_resume.
RiskState record_fill_and_check(double pnl_delta_usdc, RiskState state, const RiskConfig& config, TimestampMs now);

// Operator override clearing suspension before the day ends.
RiskState operator_resume(RiskState state);

}  // namespace polyswarm
