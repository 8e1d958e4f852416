#include "smartmask/gateway.hpp"

#include <cmath>

#include "smartmask/controller.hpp"
#include "smartmask/errors.hpp"
#include "smartmask/scenario.hpp"

namespace smartmask::gateway {

namespace {

using nlohmann::json;

std::string_view ack_status_name(std::uint8_t status) {
  switch (static_cast<protocol::AckStatus>(status)) {
    case protocol::AckStatus::ok: return "ok";
    case protocol::AckStatus::rejected: return "rejected";
    case protocol::AckStatus::malformed: return "malformed";
    case protocol::AckStatus::unsupported: return "unsupported";
  }
  return "unknown";
}

std::string_view alert_name(std::uint8_t code) {
  if (code >= 1 && code <= 3) return controller::to_string(static_cast<protocol::AlertCode>(code));
  return "unknown";
}

std::string_view risk_name(std::uint8_t risk) {
  if (risk <= 3) return controller::to_string(static_cast<controller::RiskLevel>(risk));
  return "unknown";
}

double number_field(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError("expected a number", std::string("/") + key);
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError("must be finite", std::string("/") + key);
  return x;
}

json reading_to_json(const sensors::PmReading& r) {
  return json{{"timestamp_ms", r.timestamp_ms}, {"number", r.number}, {"mass", r.mass}};
}

}  // namespace

json message_to_json(const protocol::Message& message, std::uint16_t seq) {
  return std::visit(
      [seq](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, protocol::Telemetry>) {
          return json{{"type", "telemetry"},     {"seq", seq},
                      {"timestamp_ms", m.timestamp_ms}, {"number", m.number},
                      {"mass", m.mass},          {"temperature", m.temperature},
                      {"rh", m.rh},              {"risk", m.risk},
                      {"risk_name", risk_name(m.risk)}};
        } else if constexpr (std::is_same_v<T, protocol::Status>) {
          return json{{"type", "status"},
                      {"seq", seq},
                      {"battery_pct", m.battery_pct},
                      {"liquid_pct", m.liquid_pct},
                      {"mode", m.mode},
                      {"mode_name", m.mode == 1 ? "manual" : "automatic"},
                      {"spraying", m.spraying},
                      {"cumulative_exposure", m.cumulative_exposure}};
        } else if constexpr (std::is_same_v<T, protocol::Alert>) {
          return json{{"type", "alert"}, {"seq", seq}, {"code", m.code}, {"name", alert_name(m.code)}};
        } else if constexpr (std::is_same_v<T, protocol::Command>) {
          json j = runner::command_to_json(m);
          j["type"] = "command";
          j["seq"] = seq;
          return j;
        } else {
          return json{{"type", "ack"},
                      {"seq", seq},
                      {"ack_seq", m.seq},
                      {"status", m.status},
                      {"status_name", ack_status_name(m.status)}};
        }
      },
      message);
}

Request parse_request(const json& j, double humidifier_rate) {
  if (!j.is_object()) throw ConfigError("expected an object", "/");
  if (!j.contains("type") || !j.at("type").is_string()) {
    throw ConfigError("expected a string", "/type");
  }
  const std::string type = j.at("type").get<std::string>();
  if (type == "command") {
    json body = j;
    body.erase("type");
    return SendCommand{runner::command_from_json(body)};
  }
  if (type == "inject_event") {
    if (!j.contains("kind") || !j.at("kind").is_string()) {
      throw ConfigError("expected a string", "/kind");
    }
    env::EmissionKind kind;
    try {
      kind = env::emission_kind_from_string(j.at("kind").get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError(e.what(), "/kind");
    }
    if (kind == env::EmissionKind::mist) throw ConfigError("mist comes from the actuator", "/kind");
    InjectEvent out{env::default_event(kind, humidifier_rate)};
    const double scale = number_field(j, "scale", 1.0);
    if (!(scale >= 0.0)) throw ConfigError("must be non-negative", "/scale");
    out.event.total_count *= scale;
    return out;
  }
  if (type == "set_speed") {
    const double speed = number_field(j, "speed", 1.0);
    if (!(speed > 0.0 && speed <= 1000.0)) throw ConfigError("must lie in (0, 1000]", "/speed");
    return SetSpeed{speed};
  }
  if (type == "ground_truth") {
    bool enabled = true;
    if (j.contains("enabled")) {
      if (!j.at("enabled").is_boolean()) throw ConfigError("expected a boolean", "/enabled");
      enabled = j.at("enabled").get<bool>();
    }
    return GroundTruth{enabled};
  }
  throw ConfigError("unknown request type '" + type + "'", "/type");
}

Request parse_request_line(const std::string& line, double humidifier_rate) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), "/");
  }
  return parse_request(j, humidifier_rate);
}

json ground_truth_to_json(const runner::TickRecord& record, const env::EnvState& env) {
  return json{{"type", "ground_truth"},
              {"time_s", record.time},
              {"mask", reading_to_json(record.mask)},
              {"ground", reading_to_json(record.ground)},
              {"breathing_true", env.breathing.number},
              {"ground_true", env.ground.number},
              {"spraying", record.spraying},
              {"risk", controller::to_string(record.risk)}};
}

json error_to_json(const std::string& message) {
  return json{{"type", "error"}, {"message", message}};
}

}  // namespace smartmask::gateway
