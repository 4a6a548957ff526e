#pragma once

#include <nlohmann/json.hpp>

#include "polyswarm/domain.hpp"

namespace polyswarm {

using Json = nlohmann::json;

void to_json(Json& j, const Probability& p);
void from_json(const Json& j, Probability& p);

// Fixture/wire form: keys market_id, title, yes_price, volume_usdc,
// liquidity_usdc, category, expiry, observed_at (timestamps as ISO-8601
// strings or epoch milliseconds). Optional: volume_basis, sim_truth.
void to_json(Json& j, const MarketSnapshot& m);
void from_json(const Json& j, MarketSnapshot& m);

// Accepts an ISO-8601 string or an integer epoch-millisecond value.
TimestampMs timestamp_from_json(const Json& j);

// Numbers may arrive as JSON numbers or numeric strings.
double number_from_json(const Json& j);

}  // namespace polyswarm
