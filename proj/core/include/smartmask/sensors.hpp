#pragma once

#include <cstdint>
#include <vector>

#include "smartmask/env.hpp"
#include "smartmask/random.hpp"

namespace smartmask::sensors {

enum class Location { mask, ground };

struct PmReading {
  std::uint32_t timestamp_ms = 0;
  std::vector<double> number;  // #/cm3 per bin
  std::vector<double> mass;    // ug/m3 per bin

  friend bool operator==(const PmReading&, const PmReading&) = default;
};

struct AmbientReading {
  double temperature_c = 0.0;
  double relative_humidity = 0.0;

  friend bool operator==(const AmbientReading&, const AmbientReading&) = default;
};

struct SensorConfig {
  Location location = Location::mask;
  double sample_period = 1.0;  // s
  double noise_sigma = 0.05;   // relative
  std::uint64_t rng_seed = 0;
};

void validate(const SensorConfig& cfg);

// Optical particle counter emulation. Each instance owns its noise stream.
class PmSensor {
 public:
  explicit PmSensor(SensorConfig cfg, double droplet_density = 1.0);

  const SensorConfig& config() const noexcept { return cfg_; }

  // Reads the configured box (mask -> breathing, ground -> ground) and applies
  // multiplicative noise 1 + N(0, sigma^2) per bin, clamped at zero.
  PmReading sample(const env::EnvState& env);

 private:
  SensorConfig cfg_;
  double density_;
  DeterministicRng rng_;
};

// One-shot sample with a freshly seeded stream.
PmReading sample_pm(const env::EnvState& env, const SensorConfig& cfg,
                    double droplet_density = 1.0);

// Breathing-box temperature and humidity, noise-free.
AmbientReading sample_ambient(const env::EnvState& env);

// Sum of the number bins lying within [0.3, 1.0] um.
double fine_fraction_number(const PmReading& reading, const env::BinGrid& grid);

}  // namespace smartmask::sensors
