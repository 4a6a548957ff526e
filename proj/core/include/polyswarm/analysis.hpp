#pragma once

#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polyswarm/clock.hpp"
#include "polyswarm/domain.hpp"
#include "polyswarm/json_codec.hpp"

namespace polyswarm {

// ---------------------------------------------------------------- divergence

constexpr double kInfiniteDivergence = std::numeric_limits<double>::infinity();

// sum_x P(x) ln(P(x)/Q(x)) in nats, with 0 ln(0/q) = 0. Returns
// kInfiniteDivergence when P puts mass where Q has none.
double kl_divergence(const BinaryDistribution& p, const BinaryDistribution& q);

// Jensen-Shannon divergence against the midpoint mixture; always in [0, ln 2].
double js_divergence(const BinaryDistribution& p, const BinaryDistribution& q);

struct DivergenceReport {
  std::string market_id;
  double kl_swarm_vs_market = 0.0;
  double kl_market_vs_swarm = 0.0;
  double js = 0.0;
  double priority_score = 0.0;  // equals js
};

void to_json(Json& j, const DivergenceReport& r);

DivergenceReport score_market(Probability p_swarm, Probability p_market, std::string market_id = {});

// ---------------------------------------------------------------- signals

enum class SignalKind { divergence, negation, partition, latency };
enum class SignalDirection { buy_yes, buy_no, paired };

std::string_view to_string(SignalKind k);
std::string_view to_string(SignalDirection d);
SignalKind signal_kind_from_string(std::string_view s);
SignalDirection signal_direction_from_string(std::string_view s);

struct ArbitrageSignal {
  SignalKind kind = SignalKind::divergence;
  std::vector<std::string> market_ids;
  double magnitude = 0.0;
  SignalDirection direction = SignalDirection::paired;
  TimestampMs detected_at = 0;
  // For paired signals: the side to buy on every member.
  std::optional<Side> leg_side;
};

void to_json(Json& j, const ArbitrageSignal& s);
void from_json(const Json& j, ArbitrageSignal& s);

// Divergence signal when the report's priority exceeds the threshold; the
// direction follows the sign of p_swarm - p_market.
std::optional<ArbitrageSignal> divergence_signal(const DivergenceReport& report, Probability p_swarm,
                                                 Probability p_market, double js_threshold, TimestampMs now);

// ---------------------------------------------------------------- negation pairs

struct NegationConfig {
  double min_match_score = 0.6;
  double deviation_threshold = 0.02;
};

struct NegationPair {
  std::string market_a;
  std::string market_b;
  double match_score = 0.0;
  double p_sum = 0.0;
  double deviation = 0.0;
};

// Lowercases, strips punctuation (apostrophes kept inside words) and splits on
// whitespace.
std::vector<std::string> normalize_title(std::string_view title);

struct NegationAnalysis {
  std::vector<std::string> core_tokens;  // tokens with negation cues removed
  std::vector<std::string> cues;         // negation cues found, in order
  std::vector<std::string> polarity;     // directional cues (over/above, under/below)
};

NegationAnalysis analyze_negation(std::string_view title);

// Score in [0,1] when exactly one title carries a negation cue (or the two
// carry opposite directional cues); nullopt otherwise.
std::optional<double> negation_match_score(std::string_view title_a, std::string_view title_b);

// Candidate negation pairs with match_score >= min_match_score; p_sum is the
// sum of both YES prices. Pairs come out in input order of market_a, then b.
std::vector<NegationPair> find_negation_pairs(std::span<const MarketSnapshot> markets,
                                              const NegationConfig& config = {});

std::optional<ArbitrageSignal> negation_signal(const NegationPair& pair, double threshold, TimestampMs now);

// ---------------------------------------------------------------- partitions

struct PartitionGroup {
  std::string group_id;
  std::vector<std::string> member_market_ids;
  double p_sum = 0.0;
  double deviation = 0.0;
};

// event_id -> member market ids, read from a JSON object file.
std::map<std::string, std::vector<std::string>> load_partition_groups(const std::string& path);

// Signal iff |sum of YES prices - 1| > threshold. A sum below one buys YES on
// every member; above one buys NO on every member. Throws GroupError for
// groups with fewer than two members.
std::optional<ArbitrageSignal> check_partition(std::span<const MarketSnapshot> members, double threshold,
                                               TimestampMs now, PartitionGroup* summary = nullptr);

}  // namespace polyswarm
