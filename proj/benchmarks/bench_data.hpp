#pragma once

#include <random>
#include <string>
#include <vector>

#include "polyswarm/swarm.hpp"

namespace bench {

inline std::vector<polyswarm::AgentPrediction> predictions(std::size_t n, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> p(0.05, 0.95);
  std::uniform_real_distribution<double> conf(0.1, 1.0);
  std::vector<polyswarm::AgentPrediction> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].persona_id = "p" + std::to_string(i);
    out[i].market_id = "m";
    out[i].probability = polyswarm::Probability(p(rng));
    out[i].confidence = conf(rng);
  }
  return out;
}

inline polyswarm::MarketSnapshot market(std::string id, double price, std::string title) {
  polyswarm::MarketSnapshot m;
  m.market_id = std::move(id);
  m.title = std::move(title);
  m.yes_price = polyswarm::Probability(price);
  m.volume_usdc = 10000;
  m.liquidity_usdc = 1000;
  m.expiry = 1733356800000;
  m.observed_at = 1730764800000;
  return m;
}

}  // namespace bench
