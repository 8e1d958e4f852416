#include "smartmask/mitigation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "smartmask/errors.hpp"

namespace smartmask::mitigation {

namespace {

constexpr double kCubicMicronsPerMl = 1e12;
// Residues below this are rounding noise from repeated subtraction.
constexpr double kEpsilon = 1e-9;

}  // namespace

void validate(const SprayParams& params) {
  if (!(params.intensity >= 0.0 && params.intensity <= 1.0)) {
    throw ConfigError("must be within [0, 1]", "spray.intensity");
  }
  if (!(params.duration > 0.0)) throw ConfigError("must be positive", "spray.duration");
  if (!(params.angle_factor >= 0.0 && params.angle_factor <= 1.0)) {
    throw ConfigError("must be within [0, 1]", "spray.angle_factor");
  }
}

void validate(const MitigationConfig& cfg) {
  auto non_negative = [](double value, const char* field) {
    if (!(value >= 0.0)) throw ConfigError("must be non-negative", field);
  };
  non_negative(cfg.liquid_rate_ml_per_min, "mitigation.liquid_rate_ml_per_min");
  non_negative(cfg.reservoir_ml, "mitigation.reservoir_ml");
  non_negative(cfg.battery_capacity_mah, "mitigation.battery_capacity_mah");
  non_negative(cfg.idle_current_ma, "mitigation.idle_current_ma");
  non_negative(cfg.spray_current_ma, "mitigation.spray_current_ma");
  non_negative(cfg.local_fraction, "mitigation.local_fraction");
  non_negative(cfg.push_away_rate, "mitigation.push_away_rate");
  if (!(cfg.mist_diameter_um > 0.0)) {
    throw ConfigError("must be positive", "mitigation.mist_diameter_um");
  }
}

ActuatorState full_actuator(const MitigationConfig& cfg) {
  ActuatorState state;
  state.liquid_ml = cfg.reservoir_ml;
  state.battery_mah = cfg.battery_capacity_mah;
  return state;
}

ResourceExhausted::ResourceExhausted(ResourceError which)
    : std::runtime_error(which == ResourceError::refill ? "REFILL required"
                                                        : "RECHARGE required"),
      which_(which) {}

ActuatorState start_spray(const ActuatorState& state, const SprayParams& params) {
  validate(params);
  if (!(state.liquid_ml > 0.0)) throw ResourceExhausted(ResourceError::refill);
  if (!(state.battery_mah > 0.0)) throw ResourceExhausted(ResourceError::recharge);
  ActuatorState next = state;
  next.spraying = true;
  next.time_remaining = params.duration;
  next.params = params;
  return next;
}

ActuatorState stop_spray(const ActuatorState& state) {
  ActuatorState next = state;
  next.spraying = false;
  next.time_remaining = 0.0;
  return next;
}

double mist_droplet_rate(double liquid_ml_per_min, double diameter_um) {
  const double droplet_volume = std::numbers::pi / 6.0 * diameter_um * diameter_um * diameter_um;
  return liquid_ml_per_min / 60.0 * kCubicMicronsPerMl / droplet_volume;
}

SprayStep spray_step(const ActuatorState& state, double dt, const MitigationConfig& cfg) {
  if (!(dt > 0.0)) throw DomainError("spray_step: dt must be positive");
  SprayStep out{state, std::nullopt, false};
  ActuatorState& next = out.state;

  if (!state.spraying) {
    next.battery_mah = std::max(0.0, state.battery_mah - cfg.idle_current_ma * dt / 3600.0);
    return out;
  }

  const double intensity = state.params.intensity;
  const double liquid_rate = cfg.liquid_rate_ml_per_min * intensity;  // mL/min
  const double current = cfg.idle_current_ma + cfg.spray_current_ma * intensity;

  // Spray only for the part of the step the resources and timer allow.
  double active = std::min(dt, state.time_remaining);
  if (liquid_rate > 0.0) active = std::min(active, state.liquid_ml / (liquid_rate / 60.0));
  if (current > 0.0) active = std::min(active, state.battery_mah / (current / 3600.0));
  active = std::max(active, 0.0);
  const double idle = dt - active;

  next.liquid_ml = std::max(0.0, state.liquid_ml - liquid_rate / 60.0 * active);
  next.battery_mah = std::max(
      0.0, state.battery_mah - (current * active + cfg.idle_current_ma * idle) / 3600.0);
  next.time_remaining = state.time_remaining - dt;
  if (next.time_remaining < kEpsilon) next.time_remaining = 0.0;
  if (next.liquid_ml < kEpsilon) next.liquid_ml = 0.0;
  if (next.battery_mah < kEpsilon) next.battery_mah = 0.0;

  if (active > 0.0) {
    env::MistPlume plume;
    // Time-weighted over the step so a partial final step injects less.
    plume.droplet_rate_into_box = cfg.local_fraction *
                                  mist_droplet_rate(liquid_rate, cfg.mist_diameter_um) *
                                  (active / dt);
    plume.droplet_diameter = cfg.mist_diameter_um;
    plume.push_away_rate = cfg.push_away_rate * intensity * state.params.angle_factor;
    out.plume = plume;
  }

  if (next.time_remaining <= 0.0 || next.liquid_ml <= 0.0 || next.battery_mah <= 0.0) {
    out.exhausted = next.liquid_ml <= 0.0 || next.battery_mah <= 0.0;
    next.spraying = false;
    next.time_remaining = 0.0;
  }
  return out;
}

}  // namespace smartmask::mitigation
