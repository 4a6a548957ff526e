#include "polyswarm/control.hpp"

#include <array>

#include "polyswarm/errors.hpp"

namespace polyswarm {

namespace {

constexpr std::array kCommandKinds{CommandKind::pause,         CommandKind::resume,
                                   CommandKind::set_mode,      CommandKind::arm_live,
                                   CommandKind::disarm_live,   CommandKind::set_threshold,
                                   CommandKind::resume_after_loss_limit, CommandKind::resolve_market};

CommandKind command_kind_from_string(std::string_view s) {
  for (auto k : kCommandKinds) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown command kind: " + std::string(s));
}

}  // namespace

std::string_view to_string(CommandKind k) {
  switch (k) {
    case CommandKind::pause: return "pause";
    case CommandKind::resume: return "resume";
    case CommandKind::set_mode: return "set_mode";
    case CommandKind::arm_live: return "arm_live";
    case CommandKind::disarm_live: return "disarm_live";
    case CommandKind::set_threshold: return "set_threshold";
    case CommandKind::resume_after_loss_limit: return "resume_after_loss_limit";
    case CommandKind::resolve_market: return "resolve_market";
  }
  return "pause";
}

void to_json(Json& j, const ControlCommand& c) {
  j = Json{{"kind", to_string(c.kind)}, {"issued_by", c.issued_by}, {"issued_at", c.issued_at}};
  if (c.mode) j["mode"] = to_string(*c.mode);
  if (c.name) j["name"] = *c.name;
  if (c.value) j["value"] = *c.value;
  if (c.market_id) j["market_id"] = *c.market_id;
  if (c.outcome) j["outcome"] = to_string(*c.outcome);
}

void from_json(const Json& j, ControlCommand& c) {
  if (!j.is_object()) throw ValidationError("command must be a JSON object");
  const auto kind_it = j.find("kind");
  if (kind_it == j.end() || !kind_it->is_string()) throw ValidationError("command needs a string 'kind'");
  c = ControlCommand{};
  c.kind = command_kind_from_string(kind_it->get<std::string>());
  c.issued_by = j.value("issued_by", std::string());
  c.issued_at = j.value("issued_at", TimestampMs{0});
  const auto str = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
      throw ValidationError(std::string(to_string(c.kind)) + " needs a string '" + key + "'");
    }
    return it->get<std::string>();
  };
  switch (c.kind) {
    case CommandKind::set_mode:
      c.mode = trading_mode_from_string(str("mode"));
      break;
    case CommandKind::set_threshold: {
      c.name = str("name");
      auto it = j.find("value");
      if (it == j.end() || !it->is_number()) throw ValidationError("set_threshold needs a numeric 'value'");
      c.value = it->get<double>();
      break;
    }
    case CommandKind::resolve_market:
      c.market_id = str("market_id");
      c.outcome = outcome_from_string(str("outcome"));
      break;
    default:
      break;
  }
}

ControlCommand parse_control_command(const Json& body, const std::string& issued_by, TimestampMs now) {
  auto cmd = body.get<ControlCommand>();
  cmd.issued_by = issued_by;
  cmd.issued_at = now;
  return cmd;
}

}  // namespace polyswarm
