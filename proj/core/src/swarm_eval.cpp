#include <algorithm>

#include "polyswarm/errors.hpp"
#include "polyswarm/hashing.hpp"
#include "polyswarm/swarm.hpp"

namespace polyswarm {

std::string market_digest(const MarketSnapshot& market) {
  std::string material = market.title;
  material += '\x1f';
  material += std::to_string(market.expiry);
  material += '\x1f';
  material += to_string(market.category);
  return to_hex(fnv1a64(material));
}

std::string cache_key(const std::string& persona_id, const std::string& market_id, const std::string& digest) {
  std::string material = persona_id + '\x1f' + market_id + '\x1f' + digest;
  return to_hex(fnv1a64(material));
}

std::optional<AgentPrediction> ResponseCache::get(const std::string& key, TimestampMs now) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end() || now >= it->second.expires_at) return std::nullopt;
  return it->second.response;
}

void ResponseCache::put(const std::string& key, AgentPrediction prediction, TimestampMs now) {
  std::unique_lock lock(mu_);
  entries_.insert_or_assign(key, Entry{std::move(prediction), now + ttl_.count()});
}

std::size_t ResponseCache::purge_expired(TimestampMs now) {
  std::unique_lock lock(mu_);
  return std::erase_if(entries_, [now](const auto& kv) { return now >= kv.second.expires_at; });
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

InferenceExecutor::InferenceExecutor(std::size_t max_in_flight) {
  if (max_in_flight == 0) throw ConfigError("MAX_IN_FLIGHT must be >= 1");
  workers_.reserve(max_in_flight);
  for (std::size_t i = 0; i < max_in_flight; ++i) workers_.emplace_back([this] { worker_loop(); });
}

InferenceExecutor::~InferenceExecutor() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& w : workers_) w.join();
}

std::future<std::string> InferenceExecutor::submit(std::function<std::string()> call) {
  std::packaged_task<std::string()> task([this, call = std::move(call)] {
    const auto now_in_flight = in_flight_.fetch_add(1) + 1;
    auto peak = peak_.load();
    while (now_in_flight > peak && !peak_.compare_exchange_weak(peak, now_in_flight)) {
    }
    started_.fetch_add(1);
    struct Leave {
      std::atomic<std::size_t>& counter;
      ~Leave() { counter.fetch_sub(1); }
    } leave{in_flight_};
    return call();
  });
  auto fut = task.get_future();
  {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(task));
  }
  cv_.notify_one();
  return fut;
}

void InferenceExecutor::worker_loop() {
  for (;;) {
    std::packaged_task<std::string()> task;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    task();
  }
}

SwarmEvaluator::SwarmEvaluator(InferenceProvider& provider, ResponseCache& cache, InferenceExecutor& executor,
                               const Clock& clock)
    : provider_(provider), cache_(cache), executor_(executor), clock_(clock) {}

SwarmEvaluator::Pending SwarmEvaluator::begin(const MarketSnapshot& market, std::span<const Persona> cohort) {
  if (cohort.empty()) throw SampleError("empty cohort for market " + market.market_id);
  Pending pending;
  pending.market = market;
  const auto digest = market_digest(market);
  const auto now = clock_.now();
  pending.slots.reserve(cohort.size());
  for (const auto& persona : cohort) {
    Pending::Slot slot;
    slot.persona = persona;
    slot.key = cache_key(persona.persona_id, market.market_id, digest);
    slot.cached = cache_.get(slot.key, now);
    if (!slot.cached) {
      slot.prompt = build_prompt(persona, market);
      slot.started_at = now;
      InferenceRequest req{persona.persona_id, market.market_id, slot.prompt};
      slot.response = executor_.submit([this, req = std::move(req)] { return provider_.complete(req); });
    }
    pending.slots.push_back(std::move(slot));
  }
  return pending;
}

SwarmBatch SwarmEvaluator::finish(Pending pending) {
  SwarmBatch batch;
  batch.market_id = pending.market.market_id;
  for (auto& slot : pending.slots) {
    if (slot.cached) {
      ++batch.cache_hits;
      batch.predictions.push_back(*slot.cached);
      continue;
    }
    const InferenceRequest req{slot.persona.persona_id, pending.market.market_id, slot.prompt};
    std::string raw;
    ++batch.provider_calls;
    try {
      raw = slot.response.get();
    } catch (const TransportError&) {
      // One retry per persona per cycle, for transport errors only.
      ++batch.provider_calls;
      try {
        raw = executor_.submit([this, req] { return provider_.complete(req); }).get();
      } catch (const std::exception& e) {
        batch.failures.push_back({slot.persona.persona_id, AgentFailure::Kind::transport, e.what()});
        continue;
      }
    } catch (const std::exception& e) {
      batch.failures.push_back({slot.persona.persona_id, AgentFailure::Kind::transport, e.what()});
      continue;
    }
    try {
      auto parsed = parse_agent_response(raw);
      const auto now = clock_.now();
      AgentPrediction pred{slot.persona.persona_id,
                           pending.market.market_id,
                           parsed.probability,
                           parsed.confidence,
                           std::move(parsed.reasoning),
                           provider_.provider_id(),
                           static_cast<double>(std::max<TimestampMs>(0, now - slot.started_at)),
                           now};
      cache_.put(slot.key, pred, now);
      batch.predictions.push_back(std::move(pred));
    } catch (const ParseError& e) {
      batch.failures.push_back({slot.persona.persona_id, AgentFailure::Kind::parse, e.what()});
    }
  }
  if (batch.predictions.empty()) {
    throw SwarmEmptyError("all " + std::to_string(pending.slots.size()) + " agents failed for market " +
                          batch.market_id);
  }
  return batch;
}

SwarmBatch evaluate_market(const MarketSnapshot& market, std::span<const Persona> cohort,
                           InferenceProvider& provider, ResponseCache& cache, InferenceExecutor& executor,
                           const Clock& clock) {
  SwarmEvaluator evaluator(provider, cache, executor, clock);
  return evaluator.evaluate(market, cohort);
}

}  // namespace polyswarm
