#include <charconv>
#include <cmath>
#include <optional>

#include "polyswarm/errors.hpp"
#include "polyswarm/swarm.hpp"

namespace polyswarm {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_number(const std::string& token, const char* field, std::string_view raw) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    throw ParseError(std::string(field) + " is not a number: " + token, std::string(raw));
  }
  if (used != token.size() || !std::isfinite(v)) {
    throw ParseError(std::string(field) + " is not a number: " + token, std::string(raw));
  }
  return v;
}

}  // namespace

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// "LABEL:" followed by optional blanks and a token without whitespace or '/'.
// Returns the token, or nullopt if `pos` does not start such a field.
std::optional<std::string> field_token(std::string_view text, std::size_t pos, std::string_view label) {
  std::size_t i = pos + label.size();
  while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
  const std::size_t begin = i;
  while (i < text.size() && !is_space(text[i]) && text[i] != '/') ++i;
  if (i == begin) return std::nullopt;
  return std::string(text.substr(begin, i - begin));
}

}  // namespace

ParsedResponse parse_agent_response(std::string_view raw_text) {
  constexpr std::string_view kProb = "PROBABILITY:";
  constexpr std::string_view kConf = "CONFIDENCE:";
  constexpr std::string_view kReason = "REASONING:";
  const std::string text(raw_text);

  // The structured block sits at the end; take the last PROBABILITY marker so
  // chain-of-thought text that mentions the schema earlier is ignored.
  std::size_t block_start = std::string::npos;
  std::string prob_token;
  for (std::size_t pos = text.rfind(kProb); pos != std::string::npos; pos = pos ? text.rfind(kProb, pos - 1) : std::string::npos) {
    if (auto tok = field_token(text, pos, kProb)) {
      block_start = pos;
      prob_token = std::move(*tok);
      break;
    }
  }
  if (block_start == std::string::npos) throw ParseError("missing PROBABILITY field", text);

  std::size_t conf_pos = std::string::npos;
  std::string conf_token;
  for (std::size_t pos = text.find(kConf, block_start); pos != std::string::npos; pos = text.find(kConf, pos + 1)) {
    if (auto tok = field_token(text, pos, kConf)) {
      conf_pos = pos;
      conf_token = std::move(*tok);
      break;
    }
  }
  if (conf_pos == std::string::npos) throw ParseError("missing CONFIDENCE field", text);

  const std::size_t reason_pos = text.find(kReason, conf_pos);
  if (reason_pos == std::string::npos) throw ParseError("missing REASONING field", text);
  std::string reasoning = trim(text.substr(reason_pos + kReason.size()));
  // Drop a closing code fence if the block was fenced.
  while (reasoning.size() >= 3 && reasoning.compare(reasoning.size() - 3, 3, "```") == 0) {
    reasoning = trim(reasoning.substr(0, reasoning.size() - 3));
  }
  if (reasoning.empty()) throw ParseError("empty REASONING", text);

  const double p = parse_number(prob_token, "PROBABILITY", raw_text);
  const double c = parse_number(conf_token, "CONFIDENCE", raw_text);
  if (p < 0.0 || p > 1.0) throw ParseError("PROBABILITY out of [0,1]: " + prob_token, text);
  if (c <= 0.0 || c > 1.0) throw ParseError("CONFIDENCE out of (0,1]: " + conf_token, text);
  return ParsedResponse{Probability(p), c, std::move(reasoning)};
}

std::string format_agent_response(std::string_view analysis, double probability, double confidence,
                                  std::string_view reasoning) {
  // Shortest form that reads back to the same double.
  const auto number = [](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  std::string out(analysis);
  if (!out.empty()) out += "\n\n";
  out += "PROBABILITY: " + number(probability) + "\nCONFIDENCE: " + number(confidence) + "\n";
  out += "REASONING: ";
  out += reasoning;
  out += "\n";
  return out;
}

void to_json(Json& j, const AgentPrediction& p) {
  j = Json{{"persona_id", p.persona_id},   {"market_id", p.market_id},   {"probability", p.probability.value()},
           {"confidence", p.confidence},   {"reasoning", p.reasoning},   {"provider_id", p.provider_id},
           {"latency_ms", p.latency_ms},   {"created_at", p.created_at}};
}

void from_json(const Json& j, AgentPrediction& p) {
  p.persona_id = j.at("persona_id").get<std::string>();
  p.market_id = j.at("market_id").get<std::string>();
  p.probability = Probability(j.at("probability").get<double>());
  p.confidence = j.at("confidence").get<double>();
  p.reasoning = j.at("reasoning").get<std::string>();
  p.provider_id = j.value("provider_id", std::string());
  p.latency_ms = j.value("latency_ms", 0.0);
  p.created_at = j.at("created_at").get<TimestampMs>();
  if (!(p.confidence > 0.0 && p.confidence <= 1.0)) throw ValidationError("confidence out of (0,1]");
  if (p.latency_ms < 0.0) throw ValidationError("negative latency");
}

}  // namespace polyswarm
