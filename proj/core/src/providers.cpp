#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include "polyswarm/errors.hpp"
#include "polyswarm/hashing.hpp"
#include "polyswarm/swarm.hpp"

namespace polyswarm {

double logit(double p) { return std::log(p / (1.0 - p)); }
double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string simulated_provider_complete(std::uint64_t seed, std::string_view prompt, Probability ground_truth,
                                        double noise_sigma, double bias) {
  if (noise_sigma < 0.0) throw ValidationError("noise_sigma must be >= 0");
  std::mt19937_64 rng(mix64(seed ^ fnv1a64(prompt)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double z = normal(rng);
  const double confidence = 0.5 + 0.5 * unit(rng);

  double p = ground_truth.value();
  if (noise_sigma > 0.0 || bias != 0.0) {
    const double gt = std::clamp(p, 1e-12, 1.0 - 1e-12);
    p = logistic(logit(gt) + bias + noise_sigma * z);
  }
  return format_agent_response("Simulated analysis: weighed base rates and recent developments.", p, confidence,
                               "Deterministic simulated forecast.\nDerived from a noisy reading of the latent "
                               "outcome probability.");
}

SimulatedProvider::SimulatedProvider(SimulatedProviderConfig config, TruthLookup truth)
    : config_(std::move(config)), truth_(std::move(truth)) {
  if (config_.noise_sigma < 0.0 || config_.persona_bias_sigma < 0.0) {
    throw ConfigError("simulated provider sigmas must be >= 0");
  }
}

double SimulatedProvider::persona_bias(const std::string& persona_id) const {
  if (config_.persona_bias_sigma == 0.0) return 0.0;
  std::lock_guard lock(bias_mu_);
  if (auto it = bias_cache_.find(persona_id); it != bias_cache_.end()) return it->second;
  std::mt19937_64 rng(derive_seed(config_.seed, {"persona-bias", persona_id}));
  std::normal_distribution<double> normal(0.0, config_.persona_bias_sigma);
  const double bias = normal(rng);
  bias_cache_.emplace(persona_id, bias);
  return bias;
}

Probability SimulatedProvider::truth_for(const std::string& market_id) const {
  if (truth_) {
    if (auto t = truth_(market_id)) return Probability(*t);
  }
  // Uniform in [0.05, 0.95], stable per market id.
  const double u = static_cast<double>(fnv1a64(market_id) >> 11) * 0x1.0p-53;
  return Probability(0.05 + 0.9 * u);
}

std::string SimulatedProvider::complete(const InferenceRequest& request) {
  if (config_.latency.count() > 0) std::this_thread::sleep_for(config_.latency);
  const auto seed = derive_seed(config_.seed, {request.persona_id, request.market_id});
  return simulated_provider_complete(seed, request.prompt, truth_for(request.market_id), config_.noise_sigma,
                                     persona_bias(request.persona_id));
}

RemoteHttpProvider::RemoteHttpProvider(RemoteProviderConfig config, std::shared_ptr<HttpClient> client)
    : config_(std::move(config)), client_(std::move(client)) {
  if (config_.url.empty()) throw ConfigError("provider " + config_.provider_id + " has no URL");
}

std::string RemoteHttpProvider::complete(const InferenceRequest& request) {
  const Json body{{"model", config_.model}, {"prompt", request.prompt}, {"max_tokens", config_.max_tokens}};
  HttpHeaders headers;
  if (!config_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + config_.api_key);
  const auto res = client_->post(config_.url, body.dump(), headers, config_.timeout);
  if (res.status < 200 || res.status >= 300) {
    throw TransportError("provider " + config_.provider_id + " returned HTTP " + std::to_string(res.status));
  }
  try {
    return Json::parse(res.body).at("text").get<std::string>();
  } catch (const std::exception& e) {
    // A reply without text is a transport-level defect, not an agent answer.
    throw TransportError("provider " + config_.provider_id + " sent an unusable body: " + e.what());
  }
}

RemoteProviderConfig remote_provider_from_env(const std::string& name) {
  std::string upper = name;
  for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  const auto env = [&](const std::string& suffix) -> std::string {
    const char* v = std::getenv(("PROVIDER_" + upper + "_" + suffix).c_str());
    return v ? std::string(v) : std::string();
  };
  RemoteProviderConfig cfg;
  cfg.provider_id = name;
  cfg.url = env("URL");
  cfg.api_key = env("KEY");
  cfg.model = env("MODEL");
  if (cfg.url.empty()) throw ConfigError("PROVIDER_" + upper + "_URL is not set");
  return cfg;
}

}  // namespace polyswarm
