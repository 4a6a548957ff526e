#include "polyswarm/risk.hpp"

#include <algorithm>
#include <cmath>

#include "polyswarm/errors.hpp"

namespace polyswarm {

void RiskConfig::validate() const {
  if (!(kelly_multiplier > 0.0 && kelly_multiplier <= 1.0)) throw ConfigError("KELLY_FRACTION must lie in (0, 1]");
  if (!(max_position_usdc > 0.0)) throw ConfigError("MAX_POSITION_USDC must be > 0");
  if (!(daily_loss_limit_usdc > 0.0)) throw ConfigError("DAILY_LOSS_LIMIT_USDC must be > 0");
  if (!(bankroll_usdc > 0.0)) throw ConfigError("BANKROLL_USDC must be > 0");
}

void to_json(Json& j, const RiskState& s) {
  j = Json{{"realized_pnl_today_usdc", s.realized_pnl_today_usdc},
           {"suspended", s.suspended},
           {"suspended_at", s.suspended_at ? Json(*s.suspended_at) : Json(nullptr)},
           {"trading_day", format_date(s.trading_day * kMsPerDay)},
           {"trading_day_index", s.trading_day},
           {"day_start_bankroll_usdc", s.day_start_bankroll_usdc},
           {"realized_pnl_prior_days_usdc", s.realized_pnl_prior_days_usdc}};
}

void from_json(const Json& j, RiskState& s) {
  s.realized_pnl_today_usdc = j.at("realized_pnl_today_usdc").get<double>();
  s.suspended = j.at("suspended").get<bool>();
  s.suspended_at.reset();
  if (const auto& v = j.at("suspended_at"); !v.is_null()) s.suspended_at = v.get<TimestampMs>();
  s.trading_day = j.at("trading_day_index").get<std::int64_t>();
  s.day_start_bankroll_usdc = j.at("day_start_bankroll_usdc").get<double>();
  s.realized_pnl_prior_days_usdc = j.value("realized_pnl_prior_days_usdc", 0.0);
}

RiskState initial_risk_state(const RiskConfig& config, TimestampMs now) {
  RiskState s;
  s.trading_day = utc_day(now);
  s.day_start_bankroll_usdc = config.bankroll_usdc;
  return s;
}

double kelly_fraction(Probability p, NetOdds b) {
  const double q = p.value();
  return (q * b.value() - (1.0 - q)) / b.value();
}

double position_size(double f_star, const RiskConfig& config) {
  if (!(f_star > 0.0)) return 0.0;
  return std::min(f_star * config.kelly_multiplier * config.bankroll_usdc, config.max_position_usdc);
}

RiskState roll_day(RiskState state, TimestampMs now) {
  const auto day = utc_day(now);
  if (day <= state.trading_day) return state;
  state.realized_pnl_prior_days_usdc += state.realized_pnl_today_usdc;
  state.day_start_bankroll_usdc += state.realized_pnl_today_usdc;
  state.realized_pnl_today_usdc = 0.0;
  state.suspended = false;
  state.suspended_at.reset();
  state.trading_day = day;
  return state;
}

RiskState record_fill_and_check(double pnl_delta_usdc, RiskState state, const RiskConfig& config, TimestampMs now) {
  state = roll_day(std::move(state), now);
  state.realized_pnl_today_usdc += pnl_delta_usdc;
  if (!state.suspended && pnl_delta_usdc < 0.0 && state.realized_pnl_today_usdc <= -config.daily_loss_limit_usdc) {
    state.suspended = true;
    state.suspended_at = now;
  }
  return state;
}

RiskState operator_resume(RiskState state) {
  state.suspended = false;
  state.suspended_at.reset();
  return state;
}

}  // namespace polyswarm
