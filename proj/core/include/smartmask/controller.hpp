#pragma once

// Closed-loop policy of the mask firmware: risk classification, mist
// self-interference compensation, spray decisions, operator commands and
// housekeeping alerts.

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

#include "smartmask/mitigation.hpp"
#include "smartmask/protocol.hpp"
#include "smartmask/sensors.hpp"

namespace smartmask::controller {

enum class RiskLevel : std::uint8_t { low = 0, moderate = 1, high = 2, very_high = 3 };
enum class Mode : std::uint8_t { automatic = 0, manual = 1 };
using protocol::AlertCode;

std::string_view to_string(RiskLevel risk);
std::string_view to_string(Mode mode);
std::string_view to_string(AlertCode alert);

struct ControllerConfig {
  // Ascending bounds on the 0.3-1.0 um number concentration, #/cm3.
  std::array<double, 3> risk_thresholds{100.0, 300.0, 1000.0};
  double spray_duration = 15.0;
  double intensity_high = 0.7;
  double intensity_very_high = 1.0;
  double angle_factor = 1.0;
  double cooldown = 10.0;
  double battery_alert_pct = 15.0;
  double liquid_alert_pct = 10.0;
  double decontamination_threshold = 1e5;  // #*s/cm3
  // Per-bin reading added by the mask's own spray at intensity 1.0.
  std::vector<double> self_mist_signature;
  // Bins that make up the 0.3-1.0 um range.
  std::vector<std::size_t> fine_bins{0, 1};
};

void validate(const ControllerConfig& cfg);

struct ControllerState {
  Mode mode = Mode::automatic;
  double cooldown_until = 0.0;
  double cumulative_exposure = 0.0;
  // Exposure level at the last decontamination acknowledgement.
  double exposure_at_decontamination = 0.0;
  std::set<AlertCode> latched_alerts;
  // Acknowledged while the condition still held; re-armed once it clears.
  std::set<AlertCode> suppressed_alerts;
  double spray_active_intensity = 0.0;

  friend bool operator==(const ControllerState&, const ControllerState&) = default;
};

struct SprayCommand {
  enum class Action { start, stop };
  Action action = Action::start;
  mitigation::SprayParams params{};
  bool autonomous = false;

  friend bool operator==(const SprayCommand&, const SprayCommand&) = default;
};

double fine_number(const sensors::PmReading& reading, const ControllerConfig& cfg);

RiskLevel classify_risk(const sensors::PmReading& reading, const ControllerConfig& cfg);

sensors::PmReading compensate_self_interference(const sensors::PmReading& reading,
                                                const ControllerState& state,
                                                const ControllerConfig& cfg);

struct Decision {
  ControllerState state;
  std::optional<SprayCommand> command;
};

Decision decide(const ControllerState& state, RiskLevel risk,
                const mitigation::ActuatorState& actuator, const ControllerConfig& cfg,
                double now);

struct ResourceLevels {
  double battery_pct = 100.0;
  double liquid_pct = 100.0;
};

ResourceLevels resource_levels(const mitigation::ActuatorState& actuator,
                               const mitigation::MitigationConfig& cfg);

struct Housekeeping {
  ControllerState state;
  std::vector<AlertCode> alerts;
};

Housekeeping housekeeping(const ControllerState& state, const ResourceLevels& resources,
                          const sensors::PmReading& compensated, double dt,
                          const ControllerConfig& cfg);

struct CommandOutcome {
  ControllerState state;
  std::optional<SprayCommand> command;
  protocol::Ack ack;
  // Set when SET_PARAMS changed the tunables.
  std::optional<ControllerConfig> config;
};

CommandOutcome handle_command(const ControllerState& state, const protocol::Command& command,
                              std::uint16_t seq, const mitigation::ActuatorState& actuator,
                              const ControllerConfig& cfg);

}  // namespace smartmask::controller
