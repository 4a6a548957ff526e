#include "polyswarm/aggregation.hpp"

#include <algorithm>
#include <cmath>

#include "polyswarm/errors.hpp"

namespace polyswarm {

std::string_view to_string(GateReason r) {
  switch (r) {
    case GateReason::below_ev_threshold: return "below_ev_threshold";
    case GateReason::above_stddev_threshold: return "above_stddev_threshold";
    case GateReason::too_few_agents: return "too_few_agents";
  }
  return "unknown";
}

namespace {

std::optional<GateReason> gate_reason_from_string(std::string_view s) {
  if (s == "below_ev_threshold") return GateReason::below_ev_threshold;
  if (s == "above_stddev_threshold") return GateReason::above_stddev_threshold;
  if (s == "too_few_agents") return GateReason::too_few_agents;
  return std::nullopt;
}

}  // namespace

void GateConfig::validate() const {
  if (!(min_ev >= 0.0) || !std::isfinite(min_ev)) throw ConfigError("MIN_EV must be a finite value >= 0");
  if (!(max_std_dev > 0.0 && max_std_dev <= 0.5)) throw ConfigError("MAX_STDDEV must lie in (0, 0.5]");
  if (!(weight_swarm >= 0.0 && weight_swarm <= 1.0)) throw ConfigError("WEIGHT_SWARM must lie in [0, 1]");
  if (min_agents < 1) throw ConfigError("MIN_AGENTS must be >= 1");
}

ConsensusStats swarm_consensus(std::span<const AgentPrediction> predictions) {
  if (predictions.empty()) throw EmptySwarmError("no predictions to aggregate");
  double sum_w = 0.0, sum_wp = 0.0;
  double lo = 1.0, hi = 0.0;
  for (const auto& p : predictions) {
    if (!(p.confidence > 0.0) || !std::isfinite(p.confidence)) {
      throw ValidationError("confidence weight must be > 0 for persona " + p.persona_id);
    }
    sum_w += p.confidence;
    sum_wp += p.confidence * p.probability.value();
    lo = std::min(lo, p.probability.value());
    hi = std::max(hi, p.probability.value());
  }
  const double mean = std::clamp(sum_wp / sum_w, lo, hi);
  double sum_wsq = 0.0;
  for (const auto& p : predictions) {
    const double d = p.probability.value() - mean;
    sum_wsq += p.confidence * d * d;
  }
  return ConsensusStats{Probability(mean), std::sqrt(std::max(0.0, sum_wsq / sum_w)), predictions.size()};
}

Probability bayesian_combine(Probability p_swarm, Probability p_market, double weight_swarm) {
  if (!(weight_swarm >= 0.0 && weight_swarm <= 1.0)) {
    throw ValidationError("weight_swarm must lie in [0,1]");
  }
  const double a = p_swarm.value(), b = p_market.value();
  if (weight_swarm == 1.0) return p_swarm;
  if (weight_swarm == 0.0) return p_market;
  const double mixed = weight_swarm * a + (1.0 - weight_swarm) * b;
  return Probability(std::clamp(mixed, std::min(a, b), std::max(a, b)));
}

double expected_value(Probability p_combined, NetOdds b) {
  const double p = p_combined.value();
  return p * b.value() - (1.0 - p);
}

GateDecision apply_gates(double ev, double std_dev, std::size_t n_agents, const GateConfig& config) {
  if (!(ev > config.min_ev)) return {true, GateReason::below_ev_threshold};
  if (!(std_dev < config.max_std_dev)) return {true, GateReason::above_stddev_threshold};
  if (n_agents < config.min_agents) return {true, GateReason::too_few_agents};
  return {false, std::nullopt};
}

SideEvaluation best_side(Probability p_combined, Probability yes_price) {
  const double ev_yes = expected_value(p_combined, net_odds_from_price(yes_price));
  const double ev_no = expected_value(p_combined.complement(), net_odds_from_price(yes_price.complement()));
  if (ev_no > ev_yes) return {Side::buy_no, ev_no, ev_yes, ev_no};
  return {Side::buy_yes, ev_yes, ev_yes, ev_no};
}

SwarmConsensus build_consensus(const MarketSnapshot& market, std::span<const AgentPrediction> predictions,
                               const GateConfig& config, TimestampMs decided_at) {
  const auto stats = swarm_consensus(predictions);
  SwarmConsensus c;
  c.market_id = market.market_id;
  c.p_swarm = stats.p_swarm;
  c.std_dev = stats.std_dev;
  c.n_agents = stats.n;
  c.p_market = market.yes_price;
  c.p_combined = bayesian_combine(stats.p_swarm, market.yes_price, config.weight_swarm);
  const auto sides = best_side(c.p_combined, market.yes_price);
  c.side = sides.side;
  c.ev = sides.ev;
  c.ev_yes = sides.ev_yes;
  c.ev_no = sides.ev_no;
  const auto gate = apply_gates(c.ev, c.std_dev, c.n_agents, config);
  c.gated = gate.gated;
  c.gate_reason = gate.reason;
  c.decided_at = decided_at;
  return c;
}

void to_json(Json& j, const SwarmConsensus& c) {
  j = Json{{"market_id", c.market_id},
           {"p_swarm", c.p_swarm.value()},
           {"std_dev", c.std_dev},
           {"n_agents", c.n_agents},
           {"p_market", c.p_market.value()},
           {"p_combined", c.p_combined.value()},
           {"side", to_string(c.side)},
           {"ev", c.ev},
           {"ev_yes", c.ev_yes},
           {"ev_no", c.ev_no},
           {"gated", c.gated},
           {"gate_reason", c.gate_reason ? Json(to_string(*c.gate_reason)) : Json(nullptr)},
           {"decided_at", c.decided_at}};
}

void from_json(const Json& j, SwarmConsensus& c) {
  c.market_id = j.at("market_id").get<std::string>();
  c.p_swarm = Probability(j.at("p_swarm").get<double>());
  c.std_dev = j.at("std_dev").get<double>();
  c.n_agents = j.at("n_agents").get<std::size_t>();
  c.p_market = Probability(j.at("p_market").get<double>());
  c.p_combined = Probability(j.at("p_combined").get<double>());
  c.side = side_from_string(j.at("side").get<std::string>());
  c.ev = j.at("ev").get<double>();
  c.ev_yes = j.value("ev_yes", c.ev);
  c.ev_no = j.value("ev_no", 0.0);
  c.gated = j.at("gated").get<bool>();
  c.gate_reason.reset();
  if (const auto& r = j.at("gate_reason"); r.is_string()) c.gate_reason = gate_reason_from_string(r.get<std::string>());
  c.decided_at = j.at("decided_at").get<TimestampMs>();
  if (c.n_agents < 1) throw ValidationError("consensus with no agents");
  if (c.std_dev < 0.0 || c.std_dev > 0.5 + 1e-12) throw ValidationError("std_dev out of range");
}

}  // namespace polyswarm
