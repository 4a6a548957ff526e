#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "polyswarm/domain.hpp"
#include "polyswarm/json_codec.hpp"
#include "polyswarm/swarm.hpp"

namespace polyswarm {

enum class GateReason { below_ev_threshold, above_stddev_threshold, too_few_agents };

std::string_view to_string(GateReason r);

struct GateConfig {
  double min_ev = 0.05;
  double max_std_dev = 0.30;
  double weight_swarm = 0.70;
  std::size_t min_agents = 5;

  double weight_market() const { return 1.0 - weight_swarm; }
  // Throws ConfigError on out-of-range values.
  void validate() const;
};

struct ConsensusStats {
  Probability p_swarm;
  double std_dev = 0.0;  // weighted, population convention
  std::size_t n = 0;
};

struct SwarmConsensus {
  std::string market_id;
  Probability p_swarm;
  double std_dev = 0.0;
  std::size_t n_agents = 0;
  Probability p_market;
  Probability p_combined;
  // Better of the two sides; ev is per unit stake on that side.
  Side side = Side::buy_yes;
  double ev = 0.0;
  double ev_yes = 0.0;
  double ev_no = 0.0;
  bool gated = true;
  std::optional<GateReason> gate_reason;
  TimestampMs decided_at = 0;
};

void to_json(Json& j, const SwarmConsensus& c);
void from_json(const Json& j, SwarmConsensus& c);

// p_swarm = sum(w_i p_i) / sum(w_i). Throws EmptySwarmError on empty input and
// ValidationError if any weight is not positive.
ConsensusStats swarm_consensus(std::span<const AgentPrediction> predictions);

// weight_swarm * p_swarm + (1 - weight_swarm) * p_market.
Probability bayesian_combine(Probability p_swarm, Probability p_market, double weight_swarm);

// p * b - (1 - p): expected profit per unit stake.
double expected_value(Probability p_combined, NetOdds b);

struct GateDecision {
  bool gated = false;
  std::optional<GateReason> reason;
};

// Passes iff ev > min_ev, std_dev < max_std_dev and n_agents >= min_agents;
// otherwise reports the first failing check in that order.
GateDecision apply_gates(double ev, double std_dev, std::size_t n_agents, const GateConfig& config);

struct SideEvaluation {
  Side side;
  double ev;
  double ev_yes;
  double ev_no;
};

// YES is bought at yes_price with probability p_combined; NO at 1 - yes_price
// with 1 - p_combined. Picks the side with the larger EV (YES on ties).
SideEvaluation best_side(Probability p_combined, Probability yes_price);

SwarmConsensus build_consensus(const MarketSnapshot& market, std::span<const AgentPrediction> predictions,
                               const GateConfig& config, TimestampMs decided_at);

}  // namespace polyswarm
