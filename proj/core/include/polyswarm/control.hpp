#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "polyswarm/clock.hpp"
#include "polyswarm/execution.hpp"
#include "polyswarm/json_codec.hpp"

namespace polyswarm {

enum class CommandKind {
  pause,
  resume,
  set_mode,
  arm_live,
  disarm_live,
  set_threshold,
  resume_after_loss_limit,
  resolve_market,
};

std::string_view to_string(CommandKind k);

struct ControlCommand {
  CommandKind kind = CommandKind::pause;
  std::optional<TradingMode> mode;         // set_mode
  std::optional<std::string> name;         // set_threshold
  std::optional<double> value;             // set_threshold
  std::optional<std::string> market_id;    // resolve_market
  std::optional<Outcome> outcome;          // resolve_market
  std::string issued_by;
  TimestampMs issued_at = 0;
};

// Wire form: {"kind": "...", "mode"?, "name"?, "value"?, "market_id"?,
// "outcome"?, "issued_by", "issued_at"}. Structural problems (unknown kind,
// missing arguments) throw ValidationError.
void to_json(Json& j, const ControlCommand& c);
void from_json(const Json& j, ControlCommand& c);

// Parses a POST /control body; issued_by and issued_at come from the request
// context rather than the body.
ControlCommand parse_control_command(const Json& body, const std::string& issued_by, TimestampMs now);

}  // namespace polyswarm
