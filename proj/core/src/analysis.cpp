#include "polyswarm/analysis.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <vector>

#include "polyswarm/errors.hpp"

namespace polyswarm {

// ---------------------------------------------------------------- divergence

namespace {

double kl_term(double p, double q) {
  if (p == 0.0) return 0.0;
  if (q == 0.0) return kInfiniteDivergence;
  return p * std::log(p / q);
}

}  // namespace

double kl_divergence(const BinaryDistribution& p, const BinaryDistribution& q) {
  const double d = kl_term(p.p_yes().value(), q.p_yes().value()) + kl_term(p.p_no().value(), q.p_no().value());
  // Rounding can leave tiny negatives for nearly equal distributions.
  return std::max(0.0, d);
}

double js_divergence(const BinaryDistribution& p, const BinaryDistribution& q) {
  const double m_yes = 0.5 * (p.p_yes().value() + q.p_yes().value());
  const double m_no = 0.5 * (p.p_no().value() + q.p_no().value());
  const BinaryDistribution m{Probability(m_yes), Probability(m_no)};
  const double js = 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m);
  return std::clamp(js, 0.0, std::log(2.0));
}

void to_json(Json& j, const DivergenceReport& r) {
  const auto finite_or_null = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  j = Json{{"market_id", r.market_id},
           {"kl_swarm_vs_market", finite_or_null(r.kl_swarm_vs_market)},
           {"kl_market_vs_swarm", finite_or_null(r.kl_market_vs_swarm)},
           {"js", r.js},
           {"priority_score", r.priority_score}};
}

DivergenceReport score_market(Probability p_swarm, Probability p_market, std::string market_id) {
  const BinaryDistribution swarm(p_swarm);
  const BinaryDistribution market(p_market);
  DivergenceReport r;
  r.market_id = std::move(market_id);
  r.kl_swarm_vs_market = kl_divergence(swarm, market);
  r.kl_market_vs_swarm = kl_divergence(market, swarm);
  r.js = js_divergence(swarm, market);
  r.priority_score = r.js;
  return r;
}

// ---------------------------------------------------------------- signals

std::string_view to_string(SignalKind k) {
  switch (k) {
    case SignalKind::divergence: return "divergence";
    case SignalKind::negation: return "negation";
    case SignalKind::partition: return "partition";
    case SignalKind::latency: return "latency";
  }
  return "divergence";
}

std::string_view to_string(SignalDirection d) {
  switch (d) {
    case SignalDirection::buy_yes: return "buy_yes";
    case SignalDirection::buy_no: return "buy_no";
    case SignalDirection::paired: return "paired";
  }
  return "paired";
}

SignalKind signal_kind_from_string(std::string_view s) {
  for (auto k : {SignalKind::divergence, SignalKind::negation, SignalKind::partition, SignalKind::latency}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown signal kind: " + std::string(s));
}

SignalDirection signal_direction_from_string(std::string_view s) {
  for (auto d : {SignalDirection::buy_yes, SignalDirection::buy_no, SignalDirection::paired}) {
    if (to_string(d) == s) return d;
  }
  throw ValidationError("unknown signal direction: " + std::string(s));
}

void to_json(Json& j, const ArbitrageSignal& s) {
  j = Json{{"kind", to_string(s.kind)},
           {"market_ids", s.market_ids},
           {"magnitude", s.magnitude},
           {"direction", to_string(s.direction)},
           {"detected_at", s.detected_at},
           {"leg_side", s.leg_side ? Json(to_string(*s.leg_side)) : Json(nullptr)}};
}

void from_json(const Json& j, ArbitrageSignal& s) {
  s.kind = signal_kind_from_string(j.at("kind").get<std::string>());
  s.market_ids = j.at("market_ids").get<std::vector<std::string>>();
  s.magnitude = j.at("magnitude").get<double>();
  s.direction = signal_direction_from_string(j.at("direction").get<std::string>());
  s.detected_at = j.at("detected_at").get<TimestampMs>();
  s.leg_side.reset();
  if (auto it = j.find("leg_side"); it != j.end() && it->is_string()) s.leg_side = side_from_string(it->get<std::string>());
  if (s.market_ids.empty()) throw ValidationError("signal without markets");
  if (!(s.magnitude >= 0.0)) throw ValidationError("negative signal magnitude");
}

std::optional<ArbitrageSignal> divergence_signal(const DivergenceReport& report, Probability p_swarm,
                                                 Probability p_market, double js_threshold, TimestampMs now) {
  if (!(report.priority_score > js_threshold)) return std::nullopt;
  ArbitrageSignal s;
  s.kind = SignalKind::divergence;
  s.market_ids = {report.market_id};
  s.magnitude = report.priority_score;
  s.direction = p_swarm > p_market ? SignalDirection::buy_yes : SignalDirection::buy_no;
  s.detected_at = now;
  return s;
}

// ---------------------------------------------------------------- negation pairs

std::vector<std::string> normalize_title(std::string_view title) {
  std::vector<std::string> tokens;
  std::string cur;
  const auto flush = [&] {
    while (!cur.empty() && cur.back() == '\'') cur.pop_back();
    while (!cur.empty() && cur.front() == '\'') cur.erase(cur.begin());
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (char raw : title) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'' && !cur.empty()) {
      cur.push_back('\'');
    } else if (c == ',' || c == '$') {
      // "1,000" and "$5" keep their digits together
      if (c == '$') flush();
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

namespace {

const std::set<std::string, std::less<>> kStopWords{"will", "does", "do",   "did", "the", "a",  "an", "be",
                                                   "to",   "of",   "in",   "on",  "by",  "is", "are", "there",
                                                   "it",   "its",  "this", "at",  "for", "and", "has", "have"};
const std::set<std::string, std::less<>> kNegationCues{"not", "no", "won't", "never", "doesn't", "isn't", "don't", "didn't"};
const std::set<std::string, std::less<>> kLowCues{"under", "below"};
const std::set<std::string, std::less<>> kHighCues{"over", "above"};

std::string stem(std::string t) {
  if (t.size() > 3 && t.back() == 's' && t[t.size() - 2] != 's' && t[t.size() - 2] != '\'') t.pop_back();
  return t;
}

bool negated(const NegationAnalysis& a) {
  bool n = a.cues.size() % 2 == 1;
  for (const auto& p : a.polarity) {
    if (kLowCues.contains(p)) n = !n;
  }
  return n;
}

bool has_cue(const NegationAnalysis& a) { return !a.cues.empty() || !a.polarity.empty(); }

std::vector<std::string> token_set(std::vector<std::string> tokens) {
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

// Both inputs sorted and unique.
double sorted_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (auto i = a.begin(), j = b.begin(); i != a.end() && j != b.end();) {
    const int c = i->compare(*j);
    if (c == 0) {
      ++inter;
      ++i;
      ++j;
    } else if (c < 0) {
      ++i;
    } else {
      ++j;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return sorted_jaccard(token_set(a), token_set(b));
}

}  // namespace

NegationAnalysis analyze_negation(std::string_view title) {
  const auto tokens = normalize_title(title);
  NegationAnalysis out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t == "fails" || t == "fail" || t == "failed") {
      if (i + 1 < tokens.size() && tokens[i + 1] == "to") {
        out.cues.push_back("fails to");
        ++i;
        continue;
      }
    }
    if (kNegationCues.contains(t)) {
      out.cues.push_back(t);
    } else if (kLowCues.contains(t) || kHighCues.contains(t)) {
      out.polarity.push_back(t);
    } else if (!kStopWords.contains(t)) {
      out.core_tokens.push_back(stem(t));
    }
  }
  return out;
}

std::optional<double> negation_match_score(std::string_view title_a, std::string_view title_b) {
  const auto a = analyze_negation(title_a);
  const auto b = analyze_negation(title_b);
  if (!has_cue(a) && !has_cue(b)) return std::nullopt;
  if (negated(a) == negated(b)) return std::nullopt;
  return jaccard(a.core_tokens, b.core_tokens);
}

std::vector<NegationPair> find_negation_pairs(std::span<const MarketSnapshot> markets,
                                              const NegationConfig& config) {
  std::vector<NegationAnalysis> analyses;
  std::vector<std::vector<std::string>> token_sets;
  std::vector<char> negated_flags;
  analyses.reserve(markets.size());
  for (const auto& m : markets) {
    analyses.push_back(analyze_negation(m.title));
    token_sets.push_back(token_set(analyses.back().core_tokens));
    negated_flags.push_back(negated(analyses.back()));
  }

  std::vector<NegationPair> pairs;
  for (std::size_t i = 0; i < markets.size(); ++i) {
    for (std::size_t j = i + 1; j < markets.size(); ++j) {
      const auto& a = analyses[i];
      const auto& b = analyses[j];
      if (!has_cue(a) && !has_cue(b)) continue;
      if (negated_flags[i] == negated_flags[j]) continue;
      const double score = sorted_jaccard(token_sets[i], token_sets[j]);
      if (score < config.min_match_score) continue;
      NegationPair p;
      p.market_a = markets[i].market_id;
      p.market_b = markets[j].market_id;
      p.match_score = score;
      p.p_sum = markets[i].yes_price.value() + markets[j].yes_price.value();
      p.deviation = std::abs(p.p_sum - 1.0);
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

std::optional<ArbitrageSignal> negation_signal(const NegationPair& pair, double threshold, TimestampMs now) {
  if (!(pair.deviation > threshold)) return std::nullopt;
  ArbitrageSignal s;
  s.kind = SignalKind::negation;
  s.market_ids = {pair.market_a, pair.market_b};
  s.magnitude = pair.deviation;
  s.direction = SignalDirection::paired;
  s.leg_side = pair.p_sum < 1.0 ? Side::buy_yes : Side::buy_no;
  s.detected_at = now;
  return s;
}

// ---------------------------------------------------------------- partitions

std::map<std::string, std::vector<std::string>> load_partition_groups(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open partition groups file: " + path);
  std::map<std::string, std::vector<std::string>> groups;
  try {
    const auto j = Json::parse(in);
    for (const auto& [event_id, members] : j.items()) {
      groups[event_id] = members.get<std::vector<std::string>>();
      if (groups[event_id].size() < 2) throw GroupError("partition group " + event_id + " has fewer than 2 members");
    }
  } catch (const Json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return groups;
}

std::optional<ArbitrageSignal> check_partition(std::span<const MarketSnapshot> members, double threshold,
                                               TimestampMs now, PartitionGroup* summary) {
  if (members.size() < 2) throw GroupError("a partition needs at least two members");
  double sum = 0.0;
  std::vector<std::string> ids;
  for (const auto& m : members) {
    sum += m.yes_price.value();
    ids.push_back(m.market_id);
  }
  const double deviation = std::abs(sum - 1.0);
  if (summary) {
    summary->member_market_ids = ids;
    summary->p_sum = sum;
    summary->deviation = deviation;
  }
  if (!(deviation > threshold)) return std::nullopt;
  ArbitrageSignal s;
  s.kind = SignalKind::partition;
  s.market_ids = std::move(ids);
  s.magnitude = deviation;
  s.direction = SignalDirection::paired;
  s.leg_side = sum < 1.0 ? Side::buy_yes : Side::buy_no;
  s.detected_at = now;
  return s;
}

}  // namespace polyswarm
