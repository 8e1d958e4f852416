#include "smartmask/controller.hpp"

#include <algorithm>
#include <cmath>

#include "smartmask/errors.hpp"

namespace smartmask::controller {

namespace {

constexpr std::array<AlertCode, 3> kAlerts{AlertCode::recharge, AlertCode::refill,
                                           AlertCode::decontaminate};

bool unit_interval(double v) { return v > 0.0 && v <= 1.0; }

protocol::Ack ack(std::uint16_t seq, protocol::AckStatus status) {
  return {seq, static_cast<std::uint8_t>(status)};
}

}  // namespace

std::string_view to_string(RiskLevel risk) {
  switch (risk) {
    case RiskLevel::low: return "low";
    case RiskLevel::moderate: return "moderate";
    case RiskLevel::high: return "high";
    case RiskLevel::very_high: return "very_high";
  }
  return "unknown";
}

std::string_view to_string(Mode mode) {
  return mode == Mode::automatic ? "automatic" : "manual";
}

std::string_view to_string(AlertCode alert) {
  switch (alert) {
    case AlertCode::recharge: return "recharge";
    case AlertCode::refill: return "refill";
    case AlertCode::decontaminate: return "decontaminate";
  }
  return "unknown";
}

void validate(const ControllerConfig& cfg) {
  const auto& t = cfg.risk_thresholds;
  if (!(t[0] < t[1] && t[1] < t[2])) {
    throw ConfigError("thresholds must be strictly ascending", "controller.risk_thresholds");
  }
  if (!(cfg.spray_duration > 0.0)) throw ConfigError("must be positive", "controller.spray_duration");
  if (!unit_interval(cfg.intensity_high)) {
    throw ConfigError("must be within (0, 1]", "controller.intensity_high");
  }
  if (!unit_interval(cfg.intensity_very_high)) {
    throw ConfigError("must be within (0, 1]", "controller.intensity_very_high");
  }
  if (!(cfg.angle_factor >= 0.0 && cfg.angle_factor <= 1.0)) {
    throw ConfigError("must be within [0, 1]", "controller.angle_factor");
  }
  if (!(cfg.cooldown >= 0.0)) throw ConfigError("must be non-negative", "controller.cooldown");
  if (!(cfg.battery_alert_pct > 0.0 && cfg.battery_alert_pct < 100.0)) {
    throw ConfigError("must be within (0, 100)", "controller.battery_alert_pct");
  }
  if (!(cfg.liquid_alert_pct > 0.0 && cfg.liquid_alert_pct < 100.0)) {
    throw ConfigError("must be within (0, 100)", "controller.liquid_alert_pct");
  }
  if (!(cfg.decontamination_threshold > 0.0)) {
    throw ConfigError("must be positive", "controller.decontamination_threshold");
  }
}

double fine_number(const sensors::PmReading& reading, const ControllerConfig& cfg) {
  double n = 0.0;
  for (const std::size_t bin : cfg.fine_bins) {
    if (bin < reading.number.size()) n += reading.number[bin];
  }
  return n;
}

RiskLevel classify_risk(const sensors::PmReading& reading, const ControllerConfig& cfg) {
  const double n = fine_number(reading, cfg);
  const auto& t = cfg.risk_thresholds;
  if (n < t[0]) return RiskLevel::low;
  if (n < t[1]) return RiskLevel::moderate;
  if (n < t[2]) return RiskLevel::high;
  return RiskLevel::very_high;
}

sensors::PmReading compensate_self_interference(const sensors::PmReading& reading,
                                                const ControllerState& state,
                                                const ControllerConfig& cfg) {
  if (!(state.spray_active_intensity > 0.0)) return reading;
  sensors::PmReading out = reading;
  const std::size_t bins = std::min(out.number.size(), cfg.self_mist_signature.size());
  for (std::size_t i = 0; i < bins; ++i) {
    const double raw = out.number[i];
    const double corrected =
        std::max(0.0, raw - state.spray_active_intensity * cfg.self_mist_signature[i]);
    out.number[i] = corrected;
    if (i < out.mass.size()) out.mass[i] = raw > 0.0 ? out.mass[i] * (corrected / raw) : 0.0;
  }
  return out;
}

Decision decide(const ControllerState& state, RiskLevel risk,
                const mitigation::ActuatorState& actuator, const ControllerConfig& cfg,
                double now) {
  Decision out{state, std::nullopt};
  if (state.mode != Mode::automatic) return out;
  if (risk < RiskLevel::high) return out;
  if (now < state.cooldown_until) return out;
  if (actuator.spraying) return out;
  if (!(actuator.liquid_ml > 0.0) || !(actuator.battery_mah > 0.0)) return out;

  SprayCommand command;
  command.action = SprayCommand::Action::start;
  command.autonomous = true;
  command.params.duration = cfg.spray_duration;
  command.params.intensity =
      risk == RiskLevel::very_high ? cfg.intensity_very_high : cfg.intensity_high;
  command.params.angle_factor = cfg.angle_factor;
  out.command = command;
  out.state.cooldown_until = now + cfg.spray_duration + cfg.cooldown;
  return out;
}

ResourceLevels resource_levels(const mitigation::ActuatorState& actuator,
                               const mitigation::MitigationConfig& cfg) {
  ResourceLevels levels;
  levels.battery_pct = cfg.battery_capacity_mah > 0.0
                           ? 100.0 * actuator.battery_mah / cfg.battery_capacity_mah
                           : 0.0;
  levels.liquid_pct = cfg.reservoir_ml > 0.0 ? 100.0 * actuator.liquid_ml / cfg.reservoir_ml : 0.0;
  return levels;
}

Housekeeping housekeeping(const ControllerState& state, const ResourceLevels& resources,
                          const sensors::PmReading& compensated, double dt,
                          const ControllerConfig& cfg) {
  if (!(dt > 0.0)) throw DomainError("housekeeping: dt must be positive");
  Housekeeping out{state, {}};
  ControllerState& next = out.state;
  next.cumulative_exposure += fine_number(compensated, cfg) * dt;

  for (const AlertCode alert : kAlerts) {
    bool condition = false;
    switch (alert) {
      case AlertCode::recharge:
        condition = resources.battery_pct < cfg.battery_alert_pct;
        break;
      case AlertCode::refill:
        condition = resources.liquid_pct < cfg.liquid_alert_pct;
        break;
      case AlertCode::decontaminate:
        condition = next.cumulative_exposure - next.exposure_at_decontamination >=
                    cfg.decontamination_threshold;
        break;
    }
    if (!condition) {
      next.suppressed_alerts.erase(alert);
      continue;
    }
    if (next.latched_alerts.contains(alert) || next.suppressed_alerts.contains(alert)) continue;
    next.latched_alerts.insert(alert);
    out.alerts.push_back(alert);
  }
  return out;
}

CommandOutcome handle_command(const ControllerState& state, const protocol::Command& command,
                              std::uint16_t seq, const mitigation::ActuatorState& actuator,
                              const ControllerConfig& cfg) {
  using protocol::AckStatus;
  using protocol::CommandCode;
  CommandOutcome out{state, std::nullopt, ack(seq, AckStatus::ok), std::nullopt};

  switch (static_cast<CommandCode>(command.code)) {
    case CommandCode::set_mode: {
      const auto mode = protocol::parse_set_mode(command);
      if (!mode || *mode > 1) {
        out.ack = ack(seq, AckStatus::malformed);
        return out;
      }
      out.state.mode = static_cast<Mode>(*mode);
      return out;
    }
    case CommandCode::spray_on: {
      const auto args = protocol::parse_spray_on(command);
      if (!args) {
        out.ack = ack(seq, AckStatus::malformed);
        return out;
      }
      mitigation::SprayParams params;
      params.intensity = args->intensity > 0.0f ? args->intensity : cfg.intensity_very_high;
      params.duration = args->duration > 0.0f ? args->duration : cfg.spray_duration;
      params.angle_factor = args->angle_factor > 0.0f ? args->angle_factor : cfg.angle_factor;
      if (!unit_interval(params.intensity) || !std::isfinite(params.duration) ||
          !(params.angle_factor <= 1.0)) {
        out.ack = ack(seq, AckStatus::malformed);
        return out;
      }
      // Override needs an explicit switch to manual first.
      if (state.mode != Mode::manual || !(actuator.liquid_ml > 0.0) ||
          !(actuator.battery_mah > 0.0)) {
        out.ack = ack(seq, AckStatus::rejected);
        return out;
      }
      out.command = SprayCommand{SprayCommand::Action::start, params, false};
      return out;
    }
    case CommandCode::spray_off: {
      if (!command.args.empty()) {
        out.ack = ack(seq, AckStatus::malformed);
        return out;
      }
      if (actuator.spraying) out.command = SprayCommand{SprayCommand::Action::stop, {}, false};
      return out;
    }
    case CommandCode::ack_alert: {
      const auto alert = protocol::parse_ack_alert(command);
      if (!alert) {
        out.ack = ack(seq, AckStatus::malformed);
        return out;
      }
      out.state.latched_alerts.erase(*alert);
      out.state.suppressed_alerts.insert(*alert);
      if (*alert == AlertCode::decontaminate) {
        out.state.exposure_at_decontamination = out.state.cumulative_exposure;
      }
      return out;
    }
    case CommandCode::set_params: {
      const auto args = protocol::parse_set_params(command);
      if (!args) {
        out.ack = ack(seq, AckStatus::malformed);
        return out;
      }
      ControllerConfig updated = cfg;
      updated.spray_duration = args->spray_duration;
      updated.intensity_high = args->intensity_high;
      updated.intensity_very_high = args->intensity_very_high;
      updated.cooldown = args->cooldown;
      try {
        validate(updated);
      } catch (const ConfigError&) {
        out.ack = ack(seq, AckStatus::malformed);
        return out;
      }
      if (!std::isfinite(updated.spray_duration) || !std::isfinite(updated.cooldown)) {
        out.ack = ack(seq, AckStatus::malformed);
        return out;
      }
      out.config = std::move(updated);
      return out;
    }
  }
  out.ack = ack(seq, AckStatus::unsupported);
  return out;
}

}  // namespace smartmask::controller
