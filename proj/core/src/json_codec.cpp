#include "polyswarm/json_codec.hpp"

#include <string>

#include "polyswarm/errors.hpp"

namespace polyswarm {

void to_json(Json& j, const Probability& p) { j = p.value(); }
void from_json(const Json& j, Probability& p) { p = Probability(number_from_json(j)); }

double number_from_json(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw ValidationError("not a number: " + s);
    }
    if (used != s.size()) throw ValidationError("not a number: " + s);
    return v;
  }
  throw ValidationError("expected number, got " + std::string(j.type_name()));
}

TimestampMs timestamp_from_json(const Json& j) {
  if (j.is_number_integer()) return j.get<TimestampMs>();
  if (j.is_number()) return static_cast<TimestampMs>(j.get<double>());
  if (j.is_string()) return parse_iso8601(j.get_ref<const std::string&>());
  throw ValidationError("expected timestamp, got " + std::string(j.type_name()));
}

void to_json(Json& j, const MarketSnapshot& m) {
  j = Json{{"market_id", m.market_id},
           {"title", m.title},
           {"yes_price", m.yes_price.value()},
           {"volume_usdc", m.volume_usdc},
           {"liquidity_usdc", m.liquidity_usdc},
           {"category", to_string(m.category)},
           {"expiry", m.expiry},
           {"observed_at", m.observed_at},
           {"volume_basis", to_string(m.volume_basis)}};
  if (m.sim_truth) j["sim_truth"] = *m.sim_truth;
}

void from_json(const Json& j, MarketSnapshot& m) {
  m.market_id = j.at("market_id").get<std::string>();
  m.title = j.at("title").get<std::string>();
  m.yes_price = Probability(number_from_json(j.at("yes_price")));
  m.volume_usdc = number_from_json(j.at("volume_usdc"));
  m.liquidity_usdc = number_from_json(j.at("liquidity_usdc"));
  m.category = category_from_string(j.at("category").get<std::string>());
  m.expiry = timestamp_from_json(j.at("expiry"));
  m.observed_at = timestamp_from_json(j.at("observed_at"));
  m.volume_basis = VolumeBasis::total;
  if (auto it = j.find("volume_basis"); it != j.end() && *it == "trailing_24h") {
    m.volume_basis = VolumeBasis::trailing_24h;
  }
  m.sim_truth.reset();
  if (auto it = j.find("sim_truth"); it != j.end() && !it->is_null()) m.sim_truth = number_from_json(*it);
  if (m.market_id.empty()) throw ValidationError("market_id is empty");
  if (m.volume_usdc < 0 || m.liquidity_usdc < 0) throw ValidationError("negative volume or liquidity");
}

}  // namespace polyswarm
