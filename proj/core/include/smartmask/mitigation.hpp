#pragma once

#include <optional>
#include <stdexcept>

#include "smartmask/env.hpp"

namespace smartmask::mitigation {

struct SprayParams {
  double intensity = 1.0;     // [0, 1]
  double duration = 15.0;     // s, > 0
  double angle_factor = 1.0;  // [0, 1], scales push-away
};

void validate(const SprayParams& params);

struct MitigationConfig {
  double liquid_rate_ml_per_min = 0.5;  // at full intensity
  double reservoir_ml = 30.0;
  double battery_capacity_mah = 2000.0;
  double idle_current_ma = 50.0;
  double spray_current_ma = 200.0;      // at full intensity, on top of idle
  double mist_diameter_um = 2.0;
  double local_fraction = 0.0;          // f_local
  double push_away_rate = 0.0;          // r_push at full intensity, 1/s
};

void validate(const MitigationConfig& cfg);

struct ActuatorState {
  bool spraying = false;
  double time_remaining = 0.0;  // s
  double liquid_ml = 30.0;
  double battery_mah = 2000.0;
  SprayParams params{};
  double transducer_frequency_khz = 110.0;

  friend bool operator==(const ActuatorState&, const ActuatorState&) = default;
};

ActuatorState full_actuator(const MitigationConfig& cfg);

enum class ResourceError { refill, recharge };

// Thrown by start_spray when a resource is empty.
class ResourceExhausted : public std::runtime_error {
 public:
  explicit ResourceExhausted(ResourceError which);
  ResourceError which() const noexcept { return which_; }

 private:
  ResourceError which_;
};

// Starts (or restarts) a spray; the latest command wins.
ActuatorState start_spray(const ActuatorState& state, const SprayParams& params);
ActuatorState stop_spray(const ActuatorState& state);

struct SprayStep {
  ActuatorState state;
  std::optional<env::MistPlume> plume;
  // Set when spraying stopped because liquid or charge ran out.
  bool exhausted = false;
};

SprayStep spray_step(const ActuatorState& state, double dt, const MitigationConfig& cfg);

// Mist droplets per second for the given liquid rate (mL/min) and droplet
// diameter (um).
double mist_droplet_rate(double liquid_ml_per_min, double diameter_um);

}  // namespace smartmask::mitigation
