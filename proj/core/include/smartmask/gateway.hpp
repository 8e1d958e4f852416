#pragma once

// Line-delimited JSON used between the gateway and browser clients.
//
// Gateway -> client objects carry a "type" of hello, telemetry, status,
// alert, ack, command_sent, ground_truth or error; protocol messages mirror
// the binary Message fields by name and add the frame "seq".
//
// Client -> gateway requests:
//   {"type": "command", "command": "set_mode", "mode": "manual"}
//   {"type": "inject_event", "kind": "sneeze", "scale": 1.0}
//   {"type": "set_speed", "speed": 2.0}
//   {"type": "ground_truth", "enabled": true}

#include <cstdint>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "smartmask/env.hpp"
#include "smartmask/protocol.hpp"
#include "smartmask/simulation.hpp"

namespace smartmask::gateway {

nlohmann::json message_to_json(const protocol::Message& message, std::uint16_t seq);

struct SendCommand {
  protocol::Command command;
};

struct InjectEvent {
  env::EmissionEvent event;
};

struct SetSpeed {
  double speed = 1.0;
};

struct GroundTruth {
  bool enabled = true;
};

using Request = std::variant<SendCommand, InjectEvent, SetSpeed, GroundTruth>;

// Throws ConfigError naming the offending field. `humidifier_rate` seeds the
// humidifier event default; "scale" multiplies an event's droplet count.
Request parse_request(const nlohmann::json& j, double humidifier_rate);
Request parse_request_line(const std::string& line, double humidifier_rate);

// Both sensors' readings plus the true box concentrations for one tick.
nlohmann::json ground_truth_to_json(const runner::TickRecord& record,
                                    const env::EnvState& env);

nlohmann::json error_to_json(const std::string& message);

}  // namespace smartmask::gateway
