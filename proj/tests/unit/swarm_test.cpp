#include <doctest.h>

#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "fake_http.hpp"
#include "polyswarm/errors.hpp"
#include "polyswarm/hashing.hpp"
#include "polyswarm/swarm.hpp"
#include "test_support.hpp"

using namespace polyswarm;
using polyswarm::testing::make_market;

namespace {

const std::vector<Persona>& pool() {
  static const auto p = load_persona_pool(default_persona_pool_path());
  return p;
}

// Provider whose reply depends on the persona: garbage for `broken`, one
// transport failure for each of `flaky`, a well-formed answer otherwise.
class ScriptedProvider final : public InferenceProvider {
 public:
  explicit ScriptedProvider(std::chrono::milliseconds latency = {}) : latency_(latency) {}
  const std::string& provider_id() const override { return id_; }
  Kind kind() const override { return Kind::simulated; }
  std::string complete(const InferenceRequest& r) override {
    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
    std::lock_guard lock(mu_);
    ++calls_;
    if (broken.contains(r.persona_id)) return "I would rather not say.";
    if (flaky.contains(r.persona_id) && !failed_once_.contains(r.persona_id)) {
      failed_once_.insert(r.persona_id);
      throw TransportError("connection reset");
    }
    if (dead.contains(r.persona_id)) throw TransportError("connection refused");
    return format_agent_response("analysis", 0.6, 0.5, "because");
  }
  int calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

  std::set<std::string> broken, flaky, dead;

 private:
  std::string id_ = "scripted";
  std::chrono::milliseconds latency_;
  mutable std::mutex mu_;
  int calls_ = 0;
  std::set<std::string> failed_once_;
};

std::vector<Persona> first_n(std::size_t n) { return {pool().begin(), pool().begin() + static_cast<long>(n)}; }

}  // namespace

TEST_SUITE("swarm") {

TEST_CASE("persona pool has fifty unique personas over every archetype") {
  REQUIRE(pool().size() == kPersonaPoolSize);
  std::set<std::string> ids;
  std::map<Archetype, int> per_archetype;
  for (const auto& p : pool()) {
    ids.insert(p.persona_id);
    ++per_archetype[p.archetype];
    CHECK(!p.prompt_preamble.empty());
  }
  CHECK(ids.size() == 50);
  CHECK(per_archetype.size() == 10);
}

TEST_CASE("persona pool loading rejects bad files") {
  testing::TempDir dir;
  CHECK_THROWS_AS(load_persona_pool(dir.file("missing.jsonl")), ConfigError);
  const auto small = dir.file("small.jsonl");
  testing::write_text(small, Json(pool()[0]).dump() + "\n" + Json(pool()[1]).dump() + "\n");
  CHECK_THROWS_AS(load_persona_pool(small), ConfigError);
  CHECK(load_persona_pool(small, 2).size() == 2);
  const auto dup = dir.file("dup.jsonl");
  testing::write_text(dup, Json(pool()[0]).dump() + "\n" + Json(pool()[0]).dump() + "\n");
  CHECK_THROWS_AS(load_persona_pool(dup, 2), ConfigError);
}

TEST_CASE("sampling the whole pool returns every persona") {
  const auto all = sample_personas(pool(), 50, 1);
  std::set<std::string> ids;
  for (const auto& p : all) ids.insert(p.persona_id);
  CHECK(ids.size() == 50);
}

TEST_CASE("sampling is deterministic in the seed") {
  const auto a = sample_personas(pool(), 25, 99);
  const auto b = sample_personas(pool(), 25, 99);
  REQUIRE(a.size() == 25);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].persona_id == b[i].persona_id);
  std::set<std::string> distinct;
  for (const auto& p : a) distinct.insert(p.persona_id);
  CHECK(distinct.size() == 25);
  const auto c = sample_personas(pool(), 25, 100);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].persona_id != c[i].persona_id;
  CHECK(differs);
}

TEST_CASE("sampling rejects sizes outside the pool") {
  CHECK_THROWS_AS(sample_personas(pool(), 51, 1), SampleError);
  CHECK_THROWS_AS(sample_personas(pool(), 0, 1), SampleError);
}

TEST_CASE("inclusion frequency matches 25 of 50") {
  std::map<std::string, int> hits;
  constexpr int kDraws = 10000;
  for (int s = 0; s < kDraws; ++s) {
    for (const auto& p : sample_personas(pool(), 25, static_cast<std::uint64_t>(s))) ++hits[p.persona_id];
  }
  REQUIRE(hits.size() == 50);
  for (const auto& [id, n] : hits) {
    CHECK_MESSAGE(std::abs(n / double(kDraws) - 0.5) <= 0.02, id);
  }
}

TEST_CASE("prompt withholds the market price") {
  for (double price : {0.62, 0.137, 0.5, 0.9871}) {
    auto m = make_market("mkt-abc", price, 73421.0, "Will the senate pass the bill?");
    const auto prompt = build_prompt(pool()[3], m);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", price);
    CHECK(prompt.find(buf) == std::string::npos);
    CHECK(prompt.find(std::to_string(price)) == std::string::npos);
    CHECK(prompt.find("73421") == std::string::npos);
    CHECK(prompt.find(m.title) != std::string::npos);
    CHECK(prompt.find("PROBABILITY:") != std::string::npos);
  }
}

TEST_CASE("no prompt over a synthetic corpus carries its price") {
  const auto corpus = testing::synthetic_markets({.markets = 100, .cycles = 1, .seed = 5});
  for (const auto& m : corpus) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", m.yes_price.value());
    for (const auto* persona : {&pool()[0], &pool()[49]}) {
      CHECK(build_prompt(*persona, m).find(buf) == std::string::npos);
    }
  }
}

TEST_CASE("two personas' prompts differ only in the preamble") {
  const auto m = make_market("m1", 0.4);
  const auto& a = pool()[0];
  const auto& b = pool()[17];
  const auto pa = build_prompt(a, m);
  const auto pb = build_prompt(b, m);
  REQUIRE(pa.starts_with(a.prompt_preamble));
  REQUIRE(pb.starts_with(b.prompt_preamble));
  CHECK(pa.substr(a.prompt_preamble.size()) == pb.substr(b.prompt_preamble.size()));
  CHECK(pa != pb);
}

TEST_CASE("empty title fails prompt construction") {
  auto m = make_market("m1", 0.4);
  m.title = "   ";
  CHECK_THROWS_AS(build_prompt(pool()[0], m), PromptBuildError);
}

TEST_CASE("response parsing") {
  const auto r = parse_agent_response("Thinking...\nPROBABILITY: 0.72\nCONFIDENCE: 0.8\nREASONING: polls moved");
  CHECK(r.probability.value() == 0.72);
  CHECK(r.confidence == 0.8);
  CHECK(r.reasoning == "polls moved");

  const auto inline_form = parse_agent_response("PROBABILITY: 0.72 / CONFIDENCE: 0.8 / REASONING: short");
  CHECK(inline_form.probability.value() == 0.72);
  CHECK(inline_form.confidence == 0.8);

  const auto multi = parse_agent_response("PROBABILITY: 0.3\nCONFIDENCE: 1\nREASONING: line one\nline two\n\nline four\n");
  CHECK(multi.reasoning == "line one\nline two\n\nline four");

  const auto last_block = parse_agent_response(
      "Format: PROBABILITY: x\nmore thought\nPROBABILITY: 0.4\nCONFIDENCE: 0.9\nREASONING: final");
  CHECK(last_block.probability.value() == 0.4);

  const std::string text = "PROBABILITY: 1.7\nCONFIDENCE: 0.5\nREASONING: x";
  try {
    parse_agent_response(text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.context() == text);
  }
  CHECK_THROWS_AS(parse_agent_response("PROBABILITY: 0.5\nREASONING: no confidence"), ParseError);
  CHECK_THROWS_AS(parse_agent_response("PROBABILITY: 0.5\nCONFIDENCE: 0\nREASONING: x"), ParseError);
  CHECK_THROWS_AS(parse_agent_response("PROBABILITY: 0.5\nCONFIDENCE: 1.2\nREASONING: x"), ParseError);
  CHECK_THROWS_AS(parse_agent_response("PROBABILITY: 0.5\nCONFIDENCE: 0.5\nREASONING:   "), ParseError);
  CHECK_THROWS_AS(parse_agent_response("PROBABILITY: abc\nCONFIDENCE: 0.5\nREASONING: x"), ParseError);
  CHECK_THROWS_AS(parse_agent_response("no block at all"), ParseError);
}

TEST_CASE("formatted responses round trip") {
  const auto text = format_agent_response("thinking", 0.123456789, 0.75, "a\nb");
  const auto r = parse_agent_response(text);
  CHECK(r.probability.value() == 0.123456789);
  CHECK(r.confidence == 0.75);
  CHECK(r.reasoning == "a\nb");
}

TEST_CASE("simulated provider: zero noise returns the ground truth") {
  for (double gt : {0.05, 0.3, 0.7, 0.99}) {
    const auto r = parse_agent_response(simulated_provider_complete(7, "prompt", Probability(gt), 0.0, 0.0));
    CHECK(r.probability.value() == doctest::Approx(gt).epsilon(1e-15));
  }
}

TEST_CASE("simulated provider is deterministic in seed and prompt") {
  const auto a = simulated_provider_complete(7, "prompt", Probability(0.4), 0.8, 0.1);
  CHECK(a == simulated_provider_complete(7, "prompt", Probability(0.4), 0.8, 0.1));
  CHECK(a != simulated_provider_complete(8, "prompt", Probability(0.4), 0.8, 0.1));
  CHECK(a != simulated_provider_complete(7, "prompt2", Probability(0.4), 0.8, 0.1));
  CHECK_THROWS(simulated_provider_complete(7, "prompt", Probability(0.4), -1.0, 0.0));
}

TEST_CASE("simulated provider logits are centred on the truth") {
  double sum = 0.0;
  constexpr int kDraws = 10000;
  for (int i = 0; i < kDraws; ++i) {
    const auto r = parse_agent_response(
        simulated_provider_complete(static_cast<std::uint64_t>(i), "p", Probability(0.7), 0.5, 0.0));
    sum += logit(r.probability.value());
  }
  CHECK(std::abs(sum / kDraws - logit(0.7)) <= 0.02);
}

TEST_CASE("cache: all hits means no provider calls") {
  ScriptedProvider provider;
  ResponseCache cache(std::chrono::seconds(300));
  InferenceExecutor executor(4);
  ManualClock clock(testing::kT0);
  const auto cohort = first_n(25);
  const auto m = make_market("m1", 0.4);
  const auto first = evaluate_market(m, cohort, provider, cache, executor, clock);
  CHECK(first.provider_calls == 25);
  CHECK(provider.calls() == 25);

  clock.advance(1000);
  auto moved = m;
  moved.yes_price = Probability(0.55);  // price drift alone keeps the cache warm
  const auto second = evaluate_market(moved, cohort, provider, cache, executor, clock);
  CHECK(second.predictions.size() == 25);
  CHECK(second.cache_hits == 25);
  CHECK(second.provider_calls == 0);
  CHECK(provider.calls() == 25);
}

TEST_CASE("cache entries are never served at or after expiry") {
  ResponseCache cache(std::chrono::milliseconds(300000));
  AgentPrediction p;
  p.persona_id = "P01";
  p.market_id = "m";
  p.probability = Probability(0.5);
  cache.put("k", p, 1000);
  CHECK(cache.get("k", 1000));
  CHECK(cache.get("k", 300999));
  CHECK(!cache.get("k", 301000));
  CHECK(!cache.get("k", 400000));
  CHECK(cache.purge_expired(301000) == 1);
  CHECK(cache.size() == 0);
}

TEST_CASE("cache key ignores price but not the information state") {
  auto m = make_market("m1", 0.4);
  const auto d0 = market_digest(m);
  m.yes_price = Probability(0.9);
  CHECK(market_digest(m) == d0);
  m.title += " (amended)";
  CHECK(market_digest(m) != d0);
  CHECK(cache_key("P01", "m1", d0) != cache_key("P02", "m1", d0));
}

TEST_CASE("in-flight bound holds and bounds wall time") {
  constexpr auto kLatency = std::chrono::milliseconds(40);
  ScriptedProvider provider(kLatency);
  ResponseCache cache(std::chrono::seconds(300));
  InferenceExecutor executor(4);
  SystemClock clock;
  const auto start = std::chrono::steady_clock::now();
  const auto batch = evaluate_market(make_market("m1", 0.4), first_n(25), provider, cache, executor, clock);
  const auto wall = std::chrono::steady_clock::now() - start;
  CHECK(batch.predictions.size() == 25);
  CHECK(executor.peak_in_flight() <= 4);
  CHECK(executor.peak_in_flight() >= 1);
  // ceil(25/4) rounds of one latency each
  CHECK(wall >= 7 * kLatency - std::chrono::milliseconds(5));
}

TEST_CASE("unparseable responses are dropped and counted") {
  ScriptedProvider provider;
  const auto cohort = first_n(25);
  provider.broken = {cohort[2].persona_id, cohort[10].persona_id, cohort[24].persona_id};
  ResponseCache cache(std::chrono::seconds(300));
  InferenceExecutor executor(4);
  ManualClock clock(0);
  const auto batch = evaluate_market(make_market("m1", 0.4), cohort, provider, cache, executor, clock);
  CHECK(batch.predictions.size() == 22);
  REQUIRE(batch.failures.size() == 3);
  for (const auto& f : batch.failures) {
    CHECK(f.kind == AgentFailure::Kind::parse);
    CHECK(provider.broken.contains(f.persona_id));
  }
  for (const auto& p : batch.predictions) CHECK(!provider.broken.contains(p.persona_id));
}

TEST_CASE("transport failures get one retry, parse failures none") {
  ScriptedProvider provider;
  const auto cohort = first_n(5);
  provider.flaky = {cohort[0].persona_id};
  provider.dead = {cohort[1].persona_id};
  provider.broken = {cohort[2].persona_id};
  ResponseCache cache(std::chrono::seconds(300));
  InferenceExecutor executor(2);
  ManualClock clock(0);
  const auto batch = evaluate_market(make_market("m1", 0.4), cohort, provider, cache, executor, clock);
  CHECK(batch.predictions.size() == 3);
  REQUIRE(batch.failures.size() == 2);
  CHECK(provider.calls() == 5 + 2);
  CHECK(batch.provider_calls == 7);
}

TEST_CASE("all agents failing raises SwarmEmptyError") {
  ScriptedProvider provider;
  const auto cohort = first_n(5);
  for (const auto& p : cohort) provider.broken.insert(p.persona_id);
  ResponseCache cache(std::chrono::seconds(300));
  InferenceExecutor executor(2);
  ManualClock clock(0);
  CHECK_THROWS_AS(evaluate_market(make_market("m1", 0.4), cohort, provider, cache, executor, clock),
                  SwarmEmptyError);
}

TEST_CASE("same seed and fixture give a byte-identical prediction set") {
  const auto run = [] {
    SimulatedProviderConfig cfg;
    cfg.seed = 1234;
    SimulatedProvider provider(cfg);
    ResponseCache cache(std::chrono::seconds(300));
    InferenceExecutor executor(8);
    ManualClock clock(testing::kT0);
    std::string out;
    for (const auto& m : testing::synthetic_markets({.markets = 10, .cycles = 1, .seed = 2})) {
      const auto cohort = sample_personas(pool(), 25, derive_seed(1234, {"cohort", m.market_id}));
      for (const auto& p : evaluate_market(m, cohort, provider, cache, executor, clock).predictions) {
        out += Json(p).dump() + "\n";
      }
    }
    return out;
  };
  const auto a = run();
  CHECK(!a.empty());
  CHECK(a == run());
}

TEST_CASE("simulated provider uses the registered truth") {
  SimulatedProviderConfig cfg;
  cfg.noise_sigma = 0.0;
  cfg.persona_bias_sigma = 0.0;
  SimulatedProvider provider(cfg, [](const std::string& id) -> std::optional<double> {
    if (id == "known") return 0.83;
    return std::nullopt;
  });
  const auto r = parse_agent_response(provider.complete({"P01", "known", "prompt"}));
  CHECK(r.probability.value() == doctest::Approx(0.83));
  const auto fallback = provider.truth_for("other").value();
  CHECK(fallback >= 0.05);
  CHECK(fallback <= 0.95);
}

TEST_CASE("remote provider posts the request body and reads text") {
  testing::FakeHttpServer fake;
  std::string seen_auth;
  Json seen_body;
  fake.server().Post("/v1/complete", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = Json::parse(req.body);
    res.set_content(Json{{"text", format_agent_response("", 0.33, 0.9, "remote")}}.dump(), "application/json");
  });
  fake.server().Post("/v1/down", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  fake.start();

  RemoteProviderConfig cfg;
  cfg.provider_id = "remote";
  cfg.url = fake.base_url() + "/v1/complete";
  cfg.api_key = "sk-test";
  cfg.model = "m-1";
  RemoteHttpProvider provider(cfg, make_http_client());
  const auto r = parse_agent_response(provider.complete({"P01", "m", "the prompt"}));
  CHECK(r.probability.value() == 0.33);
  CHECK(seen_auth == "Bearer sk-test");
  CHECK(seen_body.at("model") == "m-1");
  CHECK(seen_body.at("prompt") == "the prompt");
  CHECK(seen_body.at("max_tokens") == 800);

  cfg.url = fake.base_url() + "/v1/down";
  RemoteHttpProvider down(cfg, make_http_client());
  CHECK_THROWS_AS(down.complete({"P01", "m", "x"}), TransportError);
}

TEST_CASE("remote provider configuration comes from the environment") {
  ::setenv("PROVIDER_TESTCO_URL", "http://127.0.0.1:9/x", 1);
  ::setenv("PROVIDER_TESTCO_KEY", "secret", 1);
  const auto cfg = remote_provider_from_env("testco");
  CHECK(cfg.url == "http://127.0.0.1:9/x");
  CHECK(cfg.api_key == "secret");
  ::unsetenv("PROVIDER_TESTCO_URL");
  CHECK_THROWS_AS(remote_provider_from_env("testco"), ConfigError);
}

}
