#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_set>

#include "polyswarm/errors.hpp"
#include "polyswarm/swarm.hpp"

namespace polyswarm {

namespace {

constexpr std::array<std::pair<Archetype, std::string_view>, 10> kArchetypeNames{{
    {Archetype::momentum_trader, "momentum_trader"},
    {Archetype::contrarian, "contrarian"},
    {Archetype::macro_economist, "macro_economist"},
    {Archetype::technical_analyst, "technical_analyst"},
    {Archetype::fundamental_investor, "fundamental_investor"},
    {Archetype::political_scientist, "political_scientist"},
    {Archetype::sports_statistician, "sports_statistician"},
    {Archetype::public_health_expert, "public_health_expert"},
    {Archetype::domain_specialist, "domain_specialist"},
    {Archetype::generalist, "generalist"},
}};

}  // namespace

std::string_view to_string(Archetype a) {
  for (const auto& [value, name] : kArchetypeNames) {
    if (value == a) return name;
  }
  return "generalist";
}

Archetype archetype_from_string(std::string_view s) {
  for (const auto& [value, name] : kArchetypeNames) {
    if (name == s) return value;
  }
  throw ValidationError("unknown archetype: " + std::string(s));
}

void to_json(Json& j, const Persona& p) {
  j = Json{{"persona_id", p.persona_id},
           {"archetype", to_string(p.archetype)},
           {"display_name", p.display_name},
           {"prompt_preamble", p.prompt_preamble}};
}

void from_json(const Json& j, Persona& p) {
  p.persona_id = j.at("persona_id").get<std::string>();
  p.archetype = archetype_from_string(j.at("archetype").get<std::string>());
  p.display_name = j.at("display_name").get<std::string>();
  p.prompt_preamble = j.at("prompt_preamble").get<std::string>();
  if (p.persona_id.empty()) throw ValidationError("persona_id is empty");
  if (p.prompt_preamble.empty()) throw ValidationError("persona " + p.persona_id + " has no preamble");
}

std::vector<Persona> load_persona_pool(const std::string& path, std::size_t expected_size) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open persona pool: " + path);
  std::vector<Persona> pool;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Persona p;
    try {
      p = Json::parse(line).get<Persona>();
    } catch (const std::exception& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(p.persona_id).second) throw ConfigError("duplicate persona_id " + p.persona_id);
    pool.push_back(std::move(p));
  }
  if (pool.size() != expected_size) {
    throw ConfigError("persona pool holds " + std::to_string(pool.size()) + " entries, expected " +
                      std::to_string(expected_size));
  }
  return pool;
}

std::vector<Persona> sample_personas(std::span<const Persona> pool, std::size_t n, std::uint64_t rng_seed) {
  if (n < 1 || n > pool.size()) {
    throw SampleError("cannot sample " + std::to_string(n) + " personas from a pool of " +
                      std::to_string(pool.size()));
  }
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(rng_seed);
  // Partial Fisher-Yates: the first n slots are a uniform sample.
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::vector<Persona> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool[idx[i]]);
  return out;
}

std::string build_prompt(const Persona& persona, const MarketSnapshot& market) {
  if (market.title.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw PromptBuildError("market " + market.market_id + " has an empty title");
  }
  const std::string expiry = format_iso8601(market.expiry).substr(0, 16);
  std::string p;
  p.reserve(1600);
  p += persona.prompt_preamble;
  p += "\n\n";
  p += "You are forecasting the outcome of a binary prediction market question.\n";
  p += "Market ID: " + market.market_id + "\n";
  p += "Question: " + market.title + "\n";
  p += "Category: " + std::string(to_string(market.category)) + "\n";
  p += "Resolves by: " + expiry.substr(0, 10) + " " + expiry.substr(11) + " UTC\n\n";
  p +=
      "Work through the question step by step before answering:\n"
      "- State the evidence and base rates that bear on the outcome.\n"
      "- Name the main sources of uncertainty and how they could move the result.\n"
      "- Judge how confident you are in your own analysis.\n"
      "Form your estimate independently; do not anchor on any trading price.\n\n"
      "End your reply with exactly this block:\n"
      "PROBABILITY: <decimal between zero and one that the question resolves YES>\n"
      "CONFIDENCE: <decimal above zero and at most one describing your confidence>\n"
      "REASONING: <your supporting reasoning>\n";
  return p;
}

}  // namespace polyswarm
