#include <gtest/gtest.h>

#include "generators.hpp"
#include "smartmask/errors.hpp"
#include "smartmask/sensors.hpp"

namespace smartmask::sensors {
namespace {

using testing::Gen;

TEST(Sensors, EmptyBoxReadsZero) {
  const auto env = env::make_env();
  SensorConfig cfg;
  cfg.noise_sigma = 0.5;
  const auto r = sample_pm(env, cfg);
  for (double v : r.number) EXPECT_EQ(v, 0.0);
  for (double v : r.mass) EXPECT_EQ(v, 0.0);
}

TEST(Sensors, NoiseFreeMassOracle) {
  auto env = env::make_env();
  env.breathing.number[1] = 100.0;
  SensorConfig cfg;
  cfg.noise_sigma = 0.0;
  const auto r = sample_pm(env, cfg);
  EXPECT_DOUBLE_EQ(r.number[1], 100.0);
  EXPECT_NEAR(r.mass[1], 18.51, 0.01);
}

TEST(Sensors, LocationSelectsBox) {
  auto env = env::make_env();
  env.breathing.number[0] = 5.0;
  env.ground.number[0] = 7.0;
  SensorConfig cfg;
  cfg.noise_sigma = 0.0;
  EXPECT_EQ(sample_pm(env, cfg).number[0], 5.0);
  cfg.location = Location::ground;
  EXPECT_EQ(sample_pm(env, cfg).number[0], 7.0);
}

TEST(Sensors, TimestampFromSimTime) {
  auto env = env::make_env();
  env.sim_time = 12.3456;
  EXPECT_EQ(sample_pm(env, {}).timestamp_ms, 12346u);
}

TEST(Sensors, DeterministicForSeed) {
  auto env = env::make_env();
  env.breathing.number = {10, 20, 30, 40, 50};
  SensorConfig cfg;
  cfg.rng_seed = 99;
  EXPECT_EQ(sample_pm(env, cfg), sample_pm(env, cfg));
  SensorConfig other = cfg;
  other.rng_seed = 100;
  EXPECT_NE(sample_pm(env, cfg), sample_pm(env, other));
}

TEST(Sensors, NonNegativeUnderAnyNoise) {
  Gen gen(21);
  for (int trial = 0; trial < 200; ++trial) {
    const auto env = gen.env_state();
    SensorConfig cfg;
    cfg.noise_sigma = gen.uniform(0.0, 3.0);
    cfg.rng_seed = gen.integer<std::uint64_t>(0, 1'000'000);
    PmSensor sensor(cfg);
    for (int i = 0; i < 20; ++i) {
      const auto r = sensor.sample(env);
      for (double v : r.number) EXPECT_GE(v, 0.0);
      for (double v : r.mass) EXPECT_GE(v, 0.0);
    }
  }
}

TEST(Sensors, MassConsistentWithNumber) {
  Gen gen(22);
  for (int trial = 0; trial < 100; ++trial) {
    const auto env = gen.env_state();
    SensorConfig cfg;
    cfg.rng_seed = static_cast<std::uint64_t>(trial);
    const auto r = sample_pm(env, cfg);
    for (std::size_t i = 0; i < r.number.size(); ++i) {
      EXPECT_DOUBLE_EQ(r.mass[i], env::number_to_mass(r.number[i], env.grid.representative(i), 1.0));
    }
  }
}

TEST(Sensors, NoiseIsUnbiasedOnAverage) {
  auto env = env::make_env();
  env.breathing.number.assign(5, 100.0);
  SensorConfig cfg;
  cfg.rng_seed = 4;
  PmSensor sensor(cfg);
  double sum = 0.0;
  constexpr int kDraws = 4000;
  for (int i = 0; i < kDraws; ++i) sum += sensor.sample(env).number[2];
  EXPECT_NEAR(sum / kDraws, 100.0, 0.5);
}

TEST(Sensors, AmbientPassthrough) {
  auto env = env::make_env({1.8, 0.3, 1.0, 22.0, 45.0});
  EXPECT_EQ(sample_ambient(env), (AmbientReading{22.0, 45.0}));
  env.breathing.relative_humidity = 0.0;
  EXPECT_EQ(sample_ambient(env).relative_humidity, 0.0);
  env.breathing.relative_humidity = 100.0;
  EXPECT_EQ(sample_ambient(env).relative_humidity, 100.0);
}

TEST(Sensors, InvalidConfig) {
  SensorConfig cfg;
  cfg.sample_period = 0.0;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg.sample_period = 1.0;
  cfg.noise_sigma = -0.1;
  EXPECT_THROW(PmSensor{cfg}, ConfigError);
}

TEST(Sensors, FineFraction) {
  PmReading r;
  r.number = {1, 2, 4, 8, 16};
  EXPECT_DOUBLE_EQ(fine_fraction_number(r, env::BinGrid{}), 3.0);
}

}  // namespace
}  // namespace smartmask::sensors
