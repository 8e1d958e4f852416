#include "smartmask/sensors.hpp"

#include <algorithm>
#include <cmath>

#include "smartmask/errors.hpp"

namespace smartmask::sensors {

void validate(const SensorConfig& cfg) {
  if (!(cfg.sample_period > 0.0)) throw ConfigError("must be positive", "sensor.sample_period");
  if (!(cfg.noise_sigma >= 0.0)) throw ConfigError("must be non-negative", "sensor.noise_sigma");
}

PmSensor::PmSensor(SensorConfig cfg, double droplet_density)
    : cfg_(cfg), density_(droplet_density), rng_(cfg.rng_seed) {
  validate(cfg_);
}

PmReading PmSensor::sample(const env::EnvState& env) {
  const env::BoxState& box = cfg_.location == Location::mask ? env.breathing : env.ground;
  PmReading reading;
  reading.timestamp_ms = static_cast<std::uint32_t>(std::llround(env.sim_time * 1000.0));
  reading.number.resize(box.number.size());
  reading.mass.resize(box.number.size());
  for (std::size_t i = 0; i < box.number.size(); ++i) {
    // A draw is taken for every bin so the stream position does not depend
    // on the box contents.
    const double factor = cfg_.noise_sigma > 0.0 ? 1.0 + cfg_.noise_sigma * rng_.normal() : 1.0;
    const double n = std::max(0.0, box.number[i] * factor);
    reading.number[i] = n;
    reading.mass[i] = env::number_to_mass(n, env.grid.representative(i), density_);
  }
  return reading;
}

PmReading sample_pm(const env::EnvState& env, const SensorConfig& cfg, double droplet_density) {
  PmSensor sensor(cfg, droplet_density);
  return sensor.sample(env);
}

AmbientReading sample_ambient(const env::EnvState& env) {
  return {env.breathing.temperature_c, env.breathing.relative_humidity};
}

double fine_fraction_number(const PmReading& reading, const env::BinGrid& grid) {
  double sum = 0.0;
  for (std::size_t i = 0; i < reading.number.size() && i < grid.size(); ++i) {
    if (grid.lower(i) >= 0.3 - 1e-12 && grid.upper(i) <= 1.0 + 1e-12) sum += reading.number[i];
  }
  return sum;
}

}  // namespace smartmask::sensors
