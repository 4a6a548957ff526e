// Acceptance runner: one PASS/FAIL line per criterion.
//   polyswarm_acceptance [--only name[,name]] [--skip name[,name]] [--list]

#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "polyswarm/aggregation.hpp"
#include "polyswarm/analysis.hpp"
#include "polyswarm/evaluation.hpp"
#include "polyswarm/execution.hpp"
#include "polyswarm/hashing.hpp"
#include "polyswarm/latency_arb.hpp"
#include "polyswarm/log.hpp"
#include "polyswarm/orchestrator.hpp"
#include "polyswarm/persistence.hpp"
#include "polyswarm/risk.hpp"
#include "polyswarm/swarm.hpp"
#include "test_support.hpp"

using namespace polyswarm;
namespace pt = polyswarm::testing;

namespace {

// Collects sub-check failures for one criterion.
class Tally {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (ok) return;
    ++failures_;
    if (examples_.size() < 5) examples_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool ok() const { return failures_ == 0; }

  std::string detail() const {
    std::ostringstream out;
    out << checks_ - failures_ << "/" << checks_ << " checks";
    for (const auto& n : notes_) out << "; " << n;
    for (const auto& e : examples_) out << "; failed: " << e;
    return out.str();
  }

 private:
  std::size_t checks_ = 0;
  std::size_t failures_ = 0;
  std::vector<std::string> examples_;
  std::vector<std::string> notes_;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

struct RunResult {
  int status = -1;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  RunResult r;
  const std::string cmd = std::string(POLYSWARM_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

RecordQuery source_query(std::string source) {
  RecordQuery q;
  q.source = std::move(source);
  return q;
}

AgentPrediction prediction(double p, double confidence) {
  AgentPrediction a;
  a.persona_id = "x";
  a.market_id = "m";
  a.probability = Probability(p);
  a.confidence = confidence;
  return a;
}

// ---------------------------------------------------------------- formulas

// Best betting fraction on a grid of step 0.001, judged by the realized mean
// log-wealth of `bets` simulated wagers.
double log_wealth_oracle(double p, double b, int bets, std::mt19937_64& rng) {
  std::bernoulli_distribution win(p);
  long wins = 0;
  for (int i = 0; i < bets; ++i) wins += win(rng) ? 1 : 0;
  const double w = static_cast<double>(wins);
  const double l = static_cast<double>(bets - wins);
  double best_f = 0.0, best = -INFINITY;
  for (int k = 0; k < 1000; ++k) {
    const double f = k * 0.001;
    const double g = (w * std::log1p(f * b) + l * std::log1p(-f)) / bets;
    if (g > best) {
      best = g;
      best_f = f;
    }
  }
  return best_f;
}

Tally formula_suite() {
  Tally t;
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int trial = 0; trial < 2000; ++trial) {
    const auto n = 1 + static_cast<std::size_t>(unit(rng) * 40);
    std::vector<AgentPrediction> preds, scaled;
    const double scale = std::exp(unit(rng) * 9.0 - 4.5);
    double lo = 1.0, hi = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = unit(rng);
      const double c = 0.05 + 0.95 * unit(rng);
      lo = std::min(lo, p);
      hi = std::max(hi, p);
      preds.push_back(prediction(p, c));
      scaled.push_back(prediction(p, c * scale));
    }
    const auto a = swarm_consensus(preds);
    const auto b = swarm_consensus(scaled);
    t.expect(std::abs(a.p_swarm.value() - b.p_swarm.value()) <= 1e-12, "weight scaling moved the mean");
    t.expect(std::abs(a.std_dev - b.std_dev) <= 1e-12, "weight scaling moved the spread");
    t.expect(a.p_swarm.value() >= lo - 1e-12 && a.p_swarm.value() <= hi + 1e-12, "mean outside member range");
    t.expect(a.std_dev >= 0.0 && a.std_dev <= 0.5 * (hi - lo) + 1e-12, "spread outside bounds");

    const Probability ps(unit(rng)), pm(unit(rng));
    const double mixed = bayesian_combine(ps, pm, 0.70).value();
    t.expect(std::abs(mixed - (0.70 * ps.value() + 0.30 * pm.value())) <= 1e-12, "mixture is not 0.70/0.30");
    t.expect(std::abs(bayesian_combine(ps, ps, 0.70).value() - ps.value()) <= 1e-12, "agreeing inputs moved");
    t.expect(bayesian_combine(ps, pm, 1.0).value() == ps.value(), "weight 1 is not the swarm");
    t.expect(bayesian_combine(ps, pm, 0.0).value() == pm.value(), "weight 0 is not the market");
    t.expect(mixed >= std::min(ps.value(), pm.value()) - 1e-12 && mixed <= std::max(ps.value(), pm.value()) + 1e-12,
             "mixture outside its inputs");

    const Probability fair(0.001 + 0.998 * unit(rng));
    t.expect(std::abs(expected_value(fair, net_odds_from_price(fair))) <= 1e-12, "EV not zero at the fair price");
    const auto sides = best_side(fair, fair);
    t.expect(std::abs(sides.ev_yes) <= 1e-12 && std::abs(sides.ev_no) <= 1e-12, "side EV not zero at fair price");
  }

  std::mt19937_64 bet_rng(1002);
  double worst = 0.0;
  for (double p : {0.55, 0.6, 0.7, 0.9}) {
    for (double b : {0.5, 1.0, 2.0, 3.0}) {
      const double kelly = kelly_fraction(Probability(p), NetOdds(b));
      const double oracle = log_wealth_oracle(p, b, 1000000, bet_rng);
      // Betting nothing is the best a non-negative stake can do when the edge is negative.
      const double gap = std::abs(std::max(kelly, 0.0) - oracle);
      worst = std::max(worst, gap);
      t.expect(gap <= 0.01, "kelly p=" + fmt(p) + " b=" + fmt(b) + " gap " + fmt(gap));
    }
  }
  t.note("kelly max gap " + fmt(worst, 3));

  std::vector<ForecastRecord> flat;
  for (int i = 0; i < 1000; ++i) {
    ForecastRecord r;
    r.market_id = "m" + std::to_string(i);
    r.forecast = Probability(0.5);
    r.outcome = unit(rng) < 0.4 ? 1 : 0;
    flat.push_back(r);
  }
  t.expect(brier_score(flat) == 0.25, "constant 0.5 Brier is not 0.25");
  t.expect(std::abs(log_loss(flat) - std::log(2.0)) <= 1e-12, "constant 0.5 log-loss is not ln 2");
  std::vector<ForecastRecord> extreme(2);
  extreme[0].forecast = Probability(1.0);
  extreme[0].outcome = 0;
  extreme[1].forecast = Probability(0.0);
  extreme[1].outcome = 1;
  t.expect(std::isfinite(log_loss(extreme)), "extreme forecasts give infinite log-loss");
  t.expect(brier_score(extreme) == 1.0, "worst-case Brier is not 1");
  return t;
}

// ---------------------------------------------------------------- information theory

Tally information_suite() {
  Tally t;
  std::mt19937_64 rng(2001);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto draw = [&] {
    const double u = unit(rng);
    if (u < 0.02) return 0.0;
    if (u < 0.04) return 1.0;
    return unit(rng);
  };
  const double ln2 = std::log(2.0);
  for (int i = 0; i < 10000; ++i) {
    const BinaryDistribution p{Probability(draw())}, q{Probability(draw())}, r{Probability(draw())};
    const double kl = kl_divergence(p, q);
    t.expect(kl >= 0.0, "negative KL");
    t.expect(kl_divergence(p, p) == 0.0, "KL(P||P) != 0");
    const double js_pq = js_divergence(p, q);
    t.expect(std::abs(js_pq - js_divergence(q, p)) <= 1e-12, "JS not symmetric");
    t.expect(js_pq >= 0.0 && js_pq <= ln2, "JS outside [0, ln 2]");
    const double lhs = std::sqrt(js_divergence(p, r));
    const double rhs = std::sqrt(js_pq) + std::sqrt(js_divergence(q, r));
    t.expect(lhs <= rhs + 1e-9, "sqrt-JS triangle inequality");
  }

  // Composite Simpson on the density, accumulated outward from 0.
  const auto density = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
  const int panels_per_step = 50;
  const double step = 0.01;
  double integral = 0.0, max_err = 0.0;
  for (int k = 0; k <= 800; ++k) {
    const double x = k * step;
    if (k > 0) {
      const double a = x - step;
      const double h = step / panels_per_step;
      double s = 0.0;
      for (int j = 0; j < panels_per_step; ++j) {
        const double x0 = a + j * h;
        s += density(x0) + 4.0 * density(x0 + 0.5 * h) + density(x0 + h);
      }
      integral += s * h / 6.0;
    }
    max_err = std::max(max_err, std::abs(std_normal_cdf(x) - (0.5 + integral)));
    max_err = std::max(max_err, std::abs(std_normal_cdf(-x) - (0.5 - integral)));
  }
  t.expect(max_err <= 1e-9, "normal cdf error " + fmt(max_err));
  t.note("cdf max error " + fmt(max_err, 3));

  const TimestampMs now = pt::kT0;
  std::mt19937_64 mc_rng(2002);
  std::normal_distribution<double> z(0.0, 1.0);
  const int paths = 1000000;
  double worst_se = 0.0;
  for (double moneyness : {0.97, 0.99, 1.01, 1.03}) {
    for (double sigma : {0.005, 0.01, 0.02, 0.04}) {
      for (double hours : {1.0, 6.0, 24.0}) {
        const double strike = 100.0;
        const CexQuote quote{"BTC", strike * moneyness, now};
        StrikeContract contract;
        contract.market_id = "m";
        contract.symbol = "BTC";
        contract.strike = strike;
        contract.expiry = now + static_cast<TimestampMs>(hours * 3600000.0);
        VolatilityEstimate vol;
        vol.symbol = "BTC";
        vol.sigma_hourly = sigma;
        vol.window_hours = 24.0;
        vol.n_samples = 100;
        const double p = cex_implied_probability(quote, contract, vol, now).value();
        contract.direction = StrikeDirection::below;
        const double p_below = cex_implied_probability(quote, contract, vol, now).value();
        t.expect(std::abs(p + p_below - 1.0) <= 1e-12, "above and below do not complement");

        const double log_s = std::log(quote.spot);
        const double scale = sigma * std::sqrt(hours);
        const double log_k = std::log(strike);
        long hits = 0;
        for (int i = 0; i < paths; ++i) hits += (log_s + scale * z(mc_rng) > log_k) ? 1 : 0;
        const double mc = static_cast<double>(hits) / paths;
        const double se = std::sqrt(p * (1.0 - p) / paths);
        const double dev = std::abs(mc - p);
        if (se > 0.0) worst_se = std::max(worst_se, dev / se);
        t.expect(dev <= 3.0 * se + 1e-12, "S/K=" + fmt(moneyness) + " sigma=" + fmt(sigma) + " T=" + fmt(hours) +
                                               " mc=" + fmt(mc) + " model=" + fmt(p));
      }
    }
  }
  t.note("cex vs MC worst " + fmt(worst_se, 3) + " SE");
  return t;
}

// ---------------------------------------------------------------- swarm advantage

Tally swarm_advantage() {
  Tally t;
  const auto personas = load_persona_pool(default_persona_pool_path());
  const std::size_t n_markets = 2000, n_agents = 25, n_runs = 100;
  const double market_noise = 0.30;

  std::size_t consensus_beats_median = 0;
  double sum_swarm = 0.0, sum_mix = 0.0, sum_market = 0.0, sum_median = 0.0, sum_swarm_noise = 0.0;
  for (std::size_t run = 0; run < n_runs; ++run) {
    const std::uint64_t seed = derive_seed(4242, {"swarm-advantage", std::to_string(run)});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> truth_dist(0.05, 0.95);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> price_noise(0.0, market_noise);

    std::map<std::string, double> truths;
    SimulatedProviderConfig sim;
    sim.seed = seed;
    sim.noise_sigma = 0.8;
    sim.persona_bias_sigma = 0.3;
    SimulatedProvider provider(sim, [&](const std::string& id) -> std::optional<double> {
      auto it = truths.find(id);
      return it == truths.end() ? std::nullopt : std::optional<double>(it->second);
    });

    std::vector<ForecastRecord> swarm, mix, market, agents;
    double noise_sq = 0.0;
    for (std::size_t i = 0; i < n_markets; ++i) {
      const double truth = truth_dist(rng);
      const int outcome = unit(rng) < truth ? 1 : 0;
      const double price = logistic(logit(truth) + price_noise(rng));
      auto m = pt::make_market("r" + std::to_string(run) + "-m" + std::to_string(i), price, 10000.0,
                               "Will synthetic event " + std::to_string(run) + "-" + std::to_string(i) +
                                   " resolve YES?");
      truths[m.market_id] = truth;

      const auto cohort = sample_personas(personas, n_agents, derive_seed(seed, {"cohort", m.market_id}));
      std::vector<AgentPrediction> preds;
      for (const auto& persona : cohort) {
        const auto text = provider.complete({persona.persona_id, m.market_id, build_prompt(persona, m)});
        const auto parsed = parse_agent_response(text);
        AgentPrediction a;
        a.persona_id = persona.persona_id;
        a.market_id = m.market_id;
        a.probability = parsed.probability;
        a.confidence = parsed.confidence;
        preds.push_back(a);
        agents.push_back({m.market_id, parsed.probability, outcome, ForecastSource::agent, persona.persona_id});
      }
      const auto consensus = swarm_consensus(preds);
      const auto combined = bayesian_combine(consensus.p_swarm, m.yes_price, 0.70);
      swarm.push_back({m.market_id, consensus.p_swarm, outcome, ForecastSource::swarm, {}});
      mix.push_back({m.market_id, combined, outcome, ForecastSource::combined, {}});
      market.push_back({m.market_id, m.yes_price, outcome, ForecastSource::market, {}});
      const double err = logit(std::clamp(consensus.p_swarm.value(), 1e-9, 1 - 1e-9)) - logit(truth);
      noise_sq += err * err;
    }

    std::vector<double> agent_briers;
    for (const auto& [id, score] : per_agent_scores(agents)) agent_briers.push_back(score.brier);
    std::sort(agent_briers.begin(), agent_briers.end());
    const std::size_t k = agent_briers.size();
    const double median = k % 2 ? agent_briers[k / 2] : 0.5 * (agent_briers[k / 2 - 1] + agent_briers[k / 2]);

    const double b_swarm = brier_score(swarm), b_mix = brier_score(mix), b_market = brier_score(market);
    if (b_swarm < median) ++consensus_beats_median;
    sum_swarm += b_swarm;
    sum_mix += b_mix;
    sum_market += b_market;
    sum_median += median;
    sum_swarm_noise += std::sqrt(noise_sq / n_markets);
  }
  const double runs = static_cast<double>(n_runs);
  const double mean_swarm = sum_swarm / runs, mean_mix = sum_mix / runs, mean_market = sum_market / runs;
  const double swarm_noise = sum_swarm_noise / runs;

  t.expect(consensus_beats_median >= 95, "consensus beat the median agent in only " +
                                             std::to_string(consensus_beats_median) + " runs");
  t.expect(swarm_noise < market_noise, "market prior is not noisier than the swarm");
  t.expect(mean_mix < mean_swarm, "mixed forecast does not beat the swarm");
  t.expect(mean_mix < mean_market, "mixed forecast does not beat the market");
  t.note("consensus < median agent in " + std::to_string(consensus_beats_median) + "/100 runs");
  t.note("mean Brier mix " + fmt(mean_mix) + " swarm " + fmt(mean_swarm) + " market " + fmt(mean_market) +
         " median agent " + fmt(sum_median / runs));
  t.note("logit noise swarm " + fmt(swarm_noise, 3) + " market " + fmt(market_noise, 3));
  return t;
}

// ---------------------------------------------------------------- cross-market scanner

struct PlantedPair {
  const char* a;
  const char* b;
};

Tally cross_market_scanner() {
  Tally t;
  pt::TempDir dir;

  const std::vector<PlantedPair> negations{
      {"Will Arsenal win the Premier League in 2025?", "Will Arsenal not win the Premier League in 2025?"},
      {"Will the Fed cut rates in March?", "Will the Fed not cut rates in March?"},
      {"Will Bitcoin close above 90,000 on December 31?", "Will Bitcoin close below 90,000 on December 31?"},
      {"Will Tesla deliver 500,000 cars in Q4?", "Will Tesla fail to deliver 500,000 cars in Q4?"},
      {"Will Taylor Swift release a new album in 2025?", "Will Taylor Swift never release a new album in 2025?"},
      {"Will SpaceX land Starship on the Moon by 2026?", "Will SpaceX not land Starship on the Moon by 2026?"},
      {"Will Nvidia stock hit $200 in January?", "Will Nvidia stock not hit $200 in January?"},
      {"Does the Lakers' coach keep his job through June?", "Doesn't the Lakers' coach keep his job through June?"},
      {"Will OpenAI announce GPT-6 before July?", "Won't OpenAI announce GPT-6 before July?"},
      {"Will Brazil qualify for the 2026 World Cup?", "Will Brazil not qualify for the 2026 World Cup?"},
  };
  const std::vector<PlantedPair> consistent{
      {"Will Ethereum trade above 5,000 on June 30?", "Will Ethereum trade below 5,000 on June 30?"},
      {"Will Amazon split its stock in 2025?", "Will Amazon not split its stock in 2025?"},
      {"Will Ohio pass the ballot measure on recreational gambling?",
       "Will Ohio fail to pass the ballot measure on recreational gambling?"},
      {"Will Netflix raise subscription prices in spring?", "Won't Netflix raise subscription prices in spring?"},
      {"Will Canada hold a snap election in 2025?", "Will Canada never hold a snap election in 2025?"},
  };
  const std::vector<std::vector<double>> partitions{{0.25, 0.25, 0.25, 0.25}, {0.30, 0.30, 0.44}, {0.2, 0.2, 0.2}};
  const std::vector<double> partition_deviation{0.0, 0.04, 0.4};

  std::vector<MarketSnapshot> markets;
  std::mt19937_64 rng(3001);
  std::uniform_real_distribution<double> dev_mag(0.03, 0.2), base(0.2, 0.7), unit(0.0, 1.0);
  std::set<std::pair<std::string, std::string>> planted;
  std::set<std::string> consistent_ids;
  int next_id = 0;
  const auto add = [&](double price, const std::string& title) {
    auto m = pt::make_market("scan-" + std::to_string(next_id++), price, 10000.0, title);
    markets.push_back(m);
    return m.market_id;
  };
  for (const auto& pair : negations) {
    const double a = base(rng);
    const double dev = dev_mag(rng) * (unit(rng) < 0.5 ? -1.0 : 1.0);
    const auto ia = add(a, pair.a);
    const auto ib = add(1.0 - a + dev, pair.b);
    planted.insert({ia, ib});
  }
  for (const auto& pair : consistent) {
    const double a = std::round(base(rng) * 100.0) / 100.0;
    consistent_ids.insert(add(a, pair.a));
    consistent_ids.insert(add(1.0 - a, pair.b));
  }
  static const char* kElections[] = {"Iowa caucus", "Springfield mayoral race", "student council vote"};
  static const char* kCandidates[] = {"Avery", "Blake", "Casey", "Devon"};
  Json groups = Json::object();
  for (std::size_t g = 0; g < partitions.size(); ++g) {
    Json members = Json::array();
    for (std::size_t k = 0; k < partitions[g].size(); ++k) {
      members.push_back(add(partitions[g][k], std::string("Who takes the ") + kElections[g] + ": " +
                                                   kCandidates[k] + " " + std::to_string(g) + "?"));
    }
    groups["event-" + std::to_string(g)] = members;
  }
  static const char* kSubjects[] = {"Apple", "Google", "Samsung", "Toyota", "Boeing",  "Airbus", "Pfizer", "Moderna",
                                    "Shell", "Exxon",  "Disney",  "Sony",   "Nintendo", "Intel", "AMD",    "Oracle",
                                    "Uber",  "Lyft",   "Airbnb",  "Spotify"};
  static const char* kActions[] = {"announce a merger with a rival",  "open a new headquarters in Austin",
                                   "report record quarterly revenue", "appoint a new chief executive",
                                   "launch a foldable device",        "settle its antitrust lawsuit",
                                   "complete a share buyback",        "expand into the Indian market"};
  for (std::size_t s = 0; markets.size() < 200; ++s) {
    const auto subject = kSubjects[s % 20];
    const auto action = kActions[(s / 20) % 8];
    add(std::round((0.1 + 0.8 * unit(rng)) * 1000.0) / 1000.0,
        std::string("Will ") + subject + " " + action + " in " + std::to_string(2025 + s % 3) + "?");
  }
  t.expect(markets.size() == 200, "corpus size");

  pt::write_fixture(dir.file("scan.jsonl"), markets);
  pt::write_text(dir.file("groups.json"), groups.dump());
  auto config = pt::offline_config(dir, dir.file("scan.jsonl"));
  config.partition_groups_path = dir.file("groups.json");
  config.max_markets_per_cycle = 10;
  Engine engine(config);
  const auto report = engine.run_cycle();
  t.expect(report.markets_fetched == 200, "engine did not see the corpus");

  std::set<std::pair<std::string, std::string>> found;
  std::size_t consistent_hits = 0, extra = 0;
  for (const auto& rec : engine.store().query(Table::signals, source_query("negation"))) {
    const auto sig = rec.payload.get<ArbitrageSignal>();
    const std::pair<std::string, std::string> key{sig.market_ids.at(0), sig.market_ids.at(1)};
    if (consistent_ids.contains(key.first) || consistent_ids.contains(key.second)) ++consistent_hits;
    if (planted.contains(key)) {
      found.insert(key);
    } else {
      ++extra;
    }
  }
  t.expect(found.size() == planted.size(), "negation recall " + std::to_string(found.size()) + "/10");
  t.expect(consistent_hits == 0, std::to_string(consistent_hits) + " signals on consistent pairs");
  t.note("negation recall " + std::to_string(found.size()) + "/" + std::to_string(planted.size()) +
         ", consistent-pair signals " + std::to_string(consistent_hits) + ", other negation signals " +
         std::to_string(extra));

  std::set<std::string> partition_hits;
  for (const auto& rec : engine.store().query(Table::signals, source_query("partition"))) {
    const auto sig = rec.payload.get<ArbitrageSignal>();
    for (std::size_t g = 0; g < partitions.size(); ++g) {
      if (sig.market_ids == groups["event-" + std::to_string(g)].get<std::vector<std::string>>()) {
        partition_hits.insert("event-" + std::to_string(g));
        t.expect(std::abs(sig.magnitude - partition_deviation[g]) < 1e-9, "partition magnitude");
      }
    }
  }
  t.expect(partition_hits == std::set<std::string>{"event-1", "event-2"}, "partition signals on the wrong groups");
  t.note("partition signals on " + std::to_string(partition_hits.size()) + " groups (deviations 0.04, 0.4)");
  return t;
}

// ---------------------------------------------------------------- end-to-end determinism

Tally end_to_end_determinism() {
  Tally t;
  pt::TempDir dir;
  pt::SyntheticFixture spec;
  spec.markets = 40;
  spec.cycles = 8;
  const auto markets = pt::synthetic_markets(spec);
  pt::write_fixture(dir.file("fixture.jsonl"), markets);

  // Half the markets settle at the fourth cycle, drawn from their hidden truth.
  std::mt19937_64 rng(5001);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::ostringstream resolutions;
  for (std::size_t i = 0; i < spec.markets; i += 2) {
    const auto& m = markets[i];
    resolutions << Json{{"market_id", m.market_id},
                        {"outcome", unit(rng) < *m.sim_truth ? "yes" : "no"},
                        {"resolved_at", pt::kT0 + 3 * spec.interval_ms}}
                       .dump()
                << '\n';
  }
  pt::write_text(dir.file("resolutions.jsonl"), resolutions.str());

  const auto run = [&](const std::string& tag) {
    const std::string args = "run --max-cycles 8 --quiet --clock replay --log-level error --min-volume-usdc 0"
                             " --seed 42 --market-source fixture:" + dir.file("fixture.jsonl") +
                             " --resolutions-path " + dir.file("resolutions.jsonl") + " --db-path " +
                             dir.file(tag + ".db") + " --trade-log-path " + dir.file(tag + ".trades") +
                             " --report-out " + dir.file(tag + ".reports");
    return run_cli(args).status;
  };
  t.expect(run("a") == 0, "first run failed");
  t.expect(run("b") == 0, "second run failed");
  const auto trades_a = pt::read_text(dir.file("a.trades"));
  const auto reports_a = pt::read_text(dir.file("a.reports"));
  t.expect(!trades_a.empty() && trades_a == pt::read_text(dir.file("b.trades")), "trade logs differ");
  t.expect(!reports_a.empty() && reports_a == pt::read_text(dir.file("b.reports")), "cycle reports differ");
  t.expect(std::count(reports_a.begin(), reports_a.end(), '\n') == 8, "expected 8 cycle reports");

  const auto events = read_trade_log(dir.file("a.trades"));
  const auto settles = std::count_if(events.begin(), events.end(),
                                     [](const auto& e) { return e.type == LedgerEvent::Type::settle; });
  t.expect(settles > 0, "no settlements in the run");

  const auto replayed = run_cli("replay --log-level error --db-path " + dir.file("a.db"));
  t.expect(replayed.status == 0, "replay failed");
  Json from_replay;
  try {
    from_replay = Json::parse(replayed.out).at("ledger");
  } catch (const std::exception& e) {
    t.expect(false, std::string("replay output: ") + e.what());
    return t;
  }
  TimestampMs opened_at = 0;
  {
    Store store(dir.file("a.db"));
    opened_at = store_opened_at(store);
  }
  const Json from_log = summarize_events(events, 1000.0, opened_at);
  for (const char* key : {"realized_pnl_usdc", "open_exposure_usdc", "wins", "losses", "trades_filled",
                          "trades_rejected", "cash_usdc", "win_rate"}) {
    t.expect(from_replay.at(key) == from_log.at(key), std::string("ledger total differs: ") + key);
  }
  t.note(std::to_string(events.size()) + " ledger events, " + std::to_string(settles) + " settlements, realized " +
         fmt(from_replay.at("realized_pnl_usdc").get<double>()) + " USDC");
  return t;
}

// ---------------------------------------------------------------- risk interlocks

Tally risk_interlocks() {
  Tally t;
  std::mt19937_64 rng(6001);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Suspension flips on exactly the update whose running total first reaches the limit.
  for (int seq = 0; seq < 10000; ++seq) {
    RiskConfig config;
    config.daily_loss_limit_usdc = 5.0 + 50.0 * unit(rng);
    auto state = initial_risk_state(config, pt::kT0);
    double running = 0.0;
    bool crossed = false;
    for (int i = 0; i < 40; ++i) {
      const double delta = (unit(rng) - 0.6) * 12.0;
      running += delta;
      if (!crossed && delta < 0.0 && running <= -config.daily_loss_limit_usdc) crossed = true;
      state = record_fill_and_check(delta, state, config, pt::kT0 + i);
      if (state.suspended != crossed) {
        t.expect(false, "suspension at the wrong update in sequence " + std::to_string(seq));
        break;
      }
    }
  }

  // Engine: positions lose at settlement until the limit trips; nothing fills afterwards.
  pt::TempDir dir;
  pt::write_synthetic_fixture(dir.file("f.jsonl"), pt::SyntheticFixture{});
  auto config = pt::offline_config(dir, dir.file("f.jsonl"));
  Engine engine(config);
  engine.run_cycle();
  const auto open = engine.ledger().open_positions();
  t.expect(open.size() >= 6, "not enough open positions to reach the limit");
  for (const auto& trade : open) {
    ControlCommand c;
    c.kind = CommandKind::resolve_market;
    c.market_id = trade.order.market_id;
    c.outcome = trade.order.side == Side::buy_yes ? Outcome::no : Outcome::yes;
    c.issued_by = "acceptance";
    c.issued_at = engine.clock().now();
    engine.apply_command(c);
  }
  for (int i = 0; i < 4; ++i) engine.run_cycle();
  t.expect(engine.risk_state().suspended, "engine did not suspend");

  const auto events = read_trade_log(config.trade_log_path);
  double running = 0.0, at_crossing = 0.0;
  std::optional<std::size_t> crossing;
  for (std::size_t i = 0; i < events.size(); ++i) {
    double delta = 0.0;
    if (events[i].type == LedgerEvent::Type::fill) delta = -events[i].trade.fee_usdc;
    if (events[i].type == LedgerEvent::Type::settle) delta = events[i].trade.realized_pnl_usdc;
    running += delta;
    if (!crossing && delta < 0.0 && running <= -config.risk.daily_loss_limit_usdc) {
      crossing = i;
      at_crossing = running;
    }
  }
  t.expect(crossing.has_value(), "losses never reached the limit");
  if (crossing) {
    const auto& trip = events[*crossing];
    const auto suspends = engine.store().query(Table::risk_days, source_query("suspend"));
    t.expect(suspends.size() == 1, "expected one suspension record");
    if (!suspends.empty()) {
      t.expect(suspends[0].market_id == trip.trade.order.market_id, "suspension not on the crossing settlement");
      const auto realized = suspends[0].payload.at("state").at("realized_pnl_today_usdc").get<double>();
      t.expect(realized == at_crossing, "suspension recorded at " + fmt(realized) + ", expected " + fmt(at_crossing));
    }
    bool fill_after = false;
    for (std::size_t i = *crossing + 1; i < events.size(); ++i) fill_after |= events[i].type == LedgerEvent::Type::fill;
    t.expect(!fill_after, "a trade filled while suspended");
    t.note("suspended on ledger event " + std::to_string(*crossing + 1) + " of " + std::to_string(events.size()));
  }
  for (const auto& e : events) {
    t.expect(e.trade.order.size_usdc <= config.risk.max_position_usdc, "engine order above the cap");
  }

  double largest = 0.0;
  for (int i = 0; i < 100000; ++i) {
    RiskConfig rc;
    if (i % 2) {
      rc.max_position_usdc = 0.5 + 100.0 * unit(rng);
      rc.bankroll_usdc = 1.0 + 1e6 * unit(rng);
      rc.kelly_multiplier = 0.01 + 0.99 * unit(rng);
    }
    const Probability p(unit(rng));
    const Probability price(0.001 + 0.998 * unit(rng));
    const double size = position_size(kelly_fraction(p, net_odds_from_price(price)), rc);
    t.expect(size >= 0.0 && size <= rc.max_position_usdc, "size above the cap");
    if (rc.max_position_usdc == 10.0) largest = std::max(largest, size);
  }
  t.note("largest default-config size " + fmt(largest) + " USDC over 1e5 calls");
  return t;
}

// ---------------------------------------------------------------- cycle pacing

// Counts its own concurrency, independently of the executor's instrumentation.
class CountingProvider final : public InferenceProvider {
 public:
  explicit CountingProvider(std::unique_ptr<InferenceProvider> inner) : inner_(std::move(inner)) {}
  const std::string& provider_id() const override { return inner_->provider_id(); }
  Kind kind() const override { return inner_->kind(); }
  std::string complete(const InferenceRequest& request) override {
    const int now = ++in_flight_;
    int seen = peak_.load();
    while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
    }
    struct Leave {
      std::atomic<int>& n;
      ~Leave() { --n; }
    } leave{in_flight_};
    ++calls_;
    return inner_->complete(request);
  }
  int peak() const { return peak_.load(); }
  long calls() const { return calls_.load(); }

 private:
  std::unique_ptr<InferenceProvider> inner_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
  std::atomic<long> calls_{0};
};

Tally cycle_pacing() {
  Tally t;
  pt::TempDir dir;
  pt::SyntheticFixture spec;
  spec.markets = 200;
  spec.cycles = 100;
  pt::write_synthetic_fixture(dir.file("f.jsonl"), spec);
  auto config = pt::offline_config(dir, dir.file("f.jsonl"));
  config.clock = "system";
  config.scan_interval_secs = 5.0;
  config.max_in_flight = 8;
  config.cache_ttl_secs = 0.0;

  SimulatedProviderConfig sim;
  sim.latency = std::chrono::microseconds(2000);
  auto counting = std::make_unique<CountingProvider>(std::make_unique<SimulatedProvider>(sim));
  auto* provider = counting.get();
  EngineOverrides overrides;
  overrides.provider = std::move(counting);
  Engine engine(config, std::move(overrides));

  std::vector<TimestampMs> starts;
  engine.run_loop(100, [&](const ScanCycleReport& r) { starts.push_back(r.started_at); });
  t.expect(starts.size() == 100, "expected 100 cycles");
  double min_gap = 1e9, max_gap = 0.0;
  for (std::size_t i = 1; i < starts.size(); ++i) {
    const double gap = static_cast<double>(starts[i] - starts[i - 1]) / 1000.0;
    min_gap = std::min(min_gap, gap);
    max_gap = std::max(max_gap, gap);
    t.expect(std::abs(gap - 5.0) <= 0.1, "cycle " + std::to_string(i) + " spacing " + fmt(gap) + " s");
  }
  const auto bound = static_cast<int>(config.max_in_flight);
  t.expect(provider->peak() <= bound, "provider saw " + std::to_string(provider->peak()) + " concurrent calls");
  t.expect(engine.executor().peak_in_flight() <= config.max_in_flight, "executor exceeded its bound");
  t.expect(provider->peak() > 1, "calls never overlapped");
  t.note("spacing " + fmt(min_gap, 4) + ".." + fmt(max_gap, 4) + " s, peak in-flight " +
         std::to_string(provider->peak()) + "/" + std::to_string(bound) + ", " + std::to_string(provider->calls()) +
         " provider calls");
  return t;
}

struct Criterion {
  std::string name;
  double budget_secs;  // 0 = no runtime bound
  std::function<Tally()> run;
};

std::set<std::string> split_names(const std::string& s) {
  std::set<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.insert(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  Log::set_threshold(LogLevel::error);
  const std::vector<Criterion> criteria{
      {"formula_suite", 10.0, formula_suite},
      {"information_theory_suite", 30.0, information_suite},
      {"swarm_advantage", 120.0, swarm_advantage},
      {"cross_market_scanner", 0.0, cross_market_scanner},
      {"end_to_end_determinism", 0.0, end_to_end_determinism},
      {"risk_interlocks", 0.0, risk_interlocks},
      {"cycle_pacing", 0.0, cycle_pacing},
  };

  std::set<std::string> only, skip;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if ((arg == "--only" || arg == "--skip") && i + 1 < argc) {
      (arg == "--only" ? only : skip) = split_names(argv[++i]);
    } else if (arg == "--list") {
      for (const auto& c : criteria) std::cout << c.name << '\n';
      return 0;
    } else {
      std::cerr << "usage: " << argv[0] << " [--only names] [--skip names] [--list]\n";
      return 2;
    }
  }

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.name)) continue;
    if (skip.contains(c.name)) continue;
    const auto start = std::chrono::steady_clock::now();
    Tally tally;
    try {
      tally = c.run();
    } catch (const std::exception& e) {
      tally.expect(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_secs > 0.0) tally.expect(secs < c.budget_secs, "runtime over " + fmt(c.budget_secs) + " s");
    if (!tally.ok()) ++failed;
    std::cout << (tally.ok() ? "PASS " : "FAIL ") << c.name << " (" << fmt(secs, 3) << " s): " << tally.detail()
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
