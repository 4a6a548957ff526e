#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "polyswarm/clock.hpp"
#include "polyswarm/domain.hpp"
#include "polyswarm/http_client.hpp"
#include "polyswarm/json_codec.hpp"

namespace polyswarm {

// ---------------------------------------------------------------- personas

enum class Archetype {
  momentum_trader,
  contrarian,
  macro_economist,
  technical_analyst,
  fundamental_investor,
  political_scientist,
  sports_statistician,
  public_health_expert,
  domain_specialist,
  generalist,
};

std::string_view to_string(Archetype a);
Archetype archetype_from_string(std::string_view s);

struct Persona {
  std::string persona_id;
  Archetype archetype = Archetype::generalist;
  std::string display_name;
  std::string prompt_preamble;
};

void to_json(Json& j, const Persona& p);
void from_json(const Json& j, Persona& p);

constexpr std::size_t kPersonaPoolSize = 50;

// Loads a line-delimited JSON pool. Throws ConfigError when the file is
// missing, a record is malformed, ids repeat, or the pool does not hold
// exactly `expected_size` personas.
std::vector<Persona> load_persona_pool(const std::string& path, std::size_t expected_size = kPersonaPoolSize);

// n distinct personas drawn uniformly without replacement; deterministic in
// rng_seed. Throws SampleError unless 1 <= n <= pool.size().
std::vector<Persona> sample_personas(std::span<const Persona> pool, std::size_t n, std::uint64_t rng_seed);

// ---------------------------------------------------------------- prompts

// The prompt never carries the market price or any price-derived quantity.
// Throws PromptBuildError on an empty title.
std::string build_prompt(const Persona& persona, const MarketSnapshot& market);

// ---------------------------------------------------------------- responses

struct ParsedResponse {
  Probability probability;
  double confidence = 0.0;  // in (0, 1]
  std::string reasoning;
};

// Extracts the trailing PROBABILITY / CONFIDENCE / REASONING block. Nothing is
// clamped: out-of-range numbers, a missing field or empty reasoning throw
// ParseError carrying the raw text.
ParsedResponse parse_agent_response(std::string_view raw_text);

std::string format_agent_response(std::string_view analysis, double probability, double confidence,
                                  std::string_view reasoning);

struct AgentPrediction {
  std::string persona_id;
  std::string market_id;
  Probability probability;
  double confidence = 1.0;
  std::string reasoning;
  std::string provider_id;
  double latency_ms = 0.0;
  TimestampMs created_at = 0;
};

void to_json(Json& j, const AgentPrediction& p);
void from_json(const Json& j, AgentPrediction& p);

// ---------------------------------------------------------------- providers

struct InferenceRequest {
  std::string persona_id;
  std::string market_id;
  std::string prompt;
};

class InferenceProvider {
 public:
  enum class Kind { remote_http, simulated };
  virtual ~InferenceProvider() = default;
  virtual const std::string& provider_id() const = 0;
  virtual Kind kind() const = 0;
  // Raw completion text. Throws TransportError for transport-level failures.
  virtual std::string complete(const InferenceRequest& request) = 0;
};

double logit(double p);
double logistic(double x);

// Deterministic test double: probability = logistic(logit(ground_truth) + bias
// + N(0, noise_sigma^2)), drawn from a generator seeded by (seed, prompt).
std::string simulated_provider_complete(std::uint64_t seed, std::string_view prompt, Probability ground_truth,
                                        double noise_sigma, double bias);

struct SimulatedProviderConfig {
  std::string provider_id = "simulated";
  std::uint64_t seed = 42;
  double noise_sigma = 0.8;
  double persona_bias_sigma = 0.3;
  std::chrono::microseconds latency{0};
};

// Ground truth per market: the snapshot's sim_truth when a lookup is
// registered, otherwise a value derived from the market id.
class SimulatedProvider final : public InferenceProvider {
 public:
  using TruthLookup = std::function<std::optional<double>(const std::string& market_id)>;

  explicit SimulatedProvider(SimulatedProviderConfig config, TruthLookup truth = {});

  const std::string& provider_id() const override { return config_.provider_id; }
  Kind kind() const override { return Kind::simulated; }
  std::string complete(const InferenceRequest& request) override;

  // Fixed per-persona bias drawn once from N(0, persona_bias_sigma^2).
  double persona_bias(const std::string& persona_id) const;
  Probability truth_for(const std::string& market_id) const;

 private:
  SimulatedProviderConfig config_;
  TruthLookup truth_;
  mutable std::mutex bias_mu_;
  mutable std::map<std::string, double, std::less<>> bias_cache_;
};

struct RemoteProviderConfig {
  std::string provider_id;
  std::string url;
  std::string api_key;
  std::string model;
  int max_tokens = 800;
  std::chrono::milliseconds timeout{30000};
};

// POST {model, prompt, max_tokens} -> {text}.
class RemoteHttpProvider final : public InferenceProvider {
 public:
  RemoteHttpProvider(RemoteProviderConfig config, std::shared_ptr<HttpClient> client);
  const std::string& provider_id() const override { return config_.provider_id; }
  Kind kind() const override { return Kind::remote_http; }
  std::string complete(const InferenceRequest& request) override;

 private:
  RemoteProviderConfig config_;
  std::shared_ptr<HttpClient> client_;
};

// Reads PROVIDER_<NAME>_URL / PROVIDER_<NAME>_KEY (and optional _MODEL) from
// the environment. Throws ConfigError when the URL is unset.
RemoteProviderConfig remote_provider_from_env(const std::string& name);

// ---------------------------------------------------------------- cache

// Digest of the market fields that define its information state. The price is
// deliberately excluded.
std::string market_digest(const MarketSnapshot& market);
std::string cache_key(const std::string& persona_id, const std::string& market_id, const std::string& digest);

class ResponseCache {
 public:
  explicit ResponseCache(std::chrono::milliseconds ttl) : ttl_(ttl) {}

  // Served only while now < expires_at.
  std::optional<AgentPrediction> get(const std::string& key, TimestampMs now) const;
  void put(const std::string& key, AgentPrediction prediction, TimestampMs now);
  std::size_t purge_expired(TimestampMs now);
  std::size_t size() const;
  std::chrono::milliseconds ttl() const { return ttl_; }

 private:
  struct Entry {
    AgentPrediction response;
    TimestampMs expires_at;
  };
  std::chrono::milliseconds ttl_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------- concurrency

// Fixed pool of workers executing provider calls. The worker count is the
// global in-flight bound shared by every market in a cycle. Instrumented so
// tests can assert the bound was never exceeded.
class InferenceExecutor {
 public:
  explicit InferenceExecutor(std::size_t max_in_flight);
  ~InferenceExecutor();
  InferenceExecutor(const InferenceExecutor&) = delete;
  InferenceExecutor& operator=(const InferenceExecutor&) = delete;

  std::future<std::string> submit(std::function<std::string()> call);

  std::size_t max_in_flight() const { return workers_.size(); }
  std::size_t peak_in_flight() const { return peak_.load(); }
  std::uint64_t calls_started() const { return started_.load(); }
  void reset_peak() { peak_.store(0); }

 private:
  void worker_loop();

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::packaged_task<std::string()>> queue_;
  bool stopping_ = false;
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_{0};
  std::atomic<std::uint64_t> started_{0};
  std::vector<std::thread> workers_;
};

struct AgentFailure {
  std::string persona_id;
  enum class Kind { parse, transport } kind;
  std::string detail;
};

struct SwarmBatch {
  std::string market_id;
  std::vector<AgentPrediction> predictions;  // cohort order
  std::vector<AgentFailure> failures;
  std::size_t cache_hits = 0;
  std::size_t provider_calls = 0;
};

class SwarmEvaluator {
 public:
  SwarmEvaluator(InferenceProvider& provider, ResponseCache& cache, InferenceExecutor& executor, const Clock& clock);

  class Pending {
   public:
    Pending(Pending&&) = default;
    Pending& operator=(Pending&&) = default;

   private:
    friend class SwarmEvaluator;
    Pending() = default;
    struct Slot {
      Persona persona;
      std::string key;
      std::string prompt;
      std::optional<AgentPrediction> cached;
      std::future<std::string> response;
      TimestampMs started_at = 0;
    };
    MarketSnapshot market;
    std::vector<Slot> slots;
  };

  // Issues the provider calls for every non-cached persona and returns
  // without waiting, so several markets can share the executor.
  Pending begin(const MarketSnapshot& market, std::span<const Persona> cohort);
  // Collects results. Failed agents are dropped and recorded; a transport
  // failure is retried once. Throws SwarmEmptyError when no agent succeeds.
  SwarmBatch finish(Pending pending);

  SwarmBatch evaluate(const MarketSnapshot& market, std::span<const Persona> cohort) {
    return finish(begin(market, cohort));
  }

 private:
  std::string call_provider(const InferenceRequest& request);

  InferenceProvider& provider_;
  ResponseCache& cache_;
  InferenceExecutor& executor_;
  const Clock& clock_;
};

SwarmBatch evaluate_market(const MarketSnapshot& market, std::span<const Persona> cohort,
                           InferenceProvider& provider, ResponseCache& cache, InferenceExecutor& executor,
                           const Clock& clock);

}  // namespace polyswarm
