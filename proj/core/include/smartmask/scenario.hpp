#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smartmask/controller.hpp"
#include "smartmask/env.hpp"
#include "smartmask/mitigation.hpp"
#include "smartmask/protocol.hpp"
#include "smartmask/sensors.hpp"

namespace smartmask::runner {

inline constexpr int kConfigSchemaVersion = 1;

// Plume and emission parameters without measured values, fitted by `calibrate`.
struct CalibrationParams {
  double local_fraction = 0.0;    // f_local
  double coalescence_rate = 0.0;  // k_c, cm3/s
  double push_away_rate = 0.0;    // r_push, 1/s
  double humidifier_rate = 0.0;   // droplets/s

  friend bool operator==(const CalibrationParams&, const CalibrationParams&) = default;
};

struct ScheduledEvent {
  double start = 0.0;
  env::EmissionEvent event;
};

// Operator command injected at a fixed scenario time.
struct ScheduledCommand {
  double time = 0.0;
  protocol::Command command;
};

struct ScenarioConfig {
  double duration = 175.0;
  double physics_dt = 0.1;
  double control_dt = 1.0;
  std::uint64_t seed = 1;
  env::Geometry geometry{};
  env::EnvParams env_params{};
  // Optional uniform background in the breathing and ground boxes, #/cm3 per bin.
  std::vector<double> background;
  std::vector<ScheduledEvent> events;
  std::vector<ScheduledCommand> commands;
  controller::ControllerConfig controller{};
  controller::Mode initial_mode = controller::Mode::automatic;
  mitigation::MitigationConfig mitigation{};
  double mask_noise_sigma = 0.05;
  double ground_noise_sigma = 0.05;
  double sample_period = 1.0;
  CalibrationParams calibration{};
  bool mask_enabled = true;
  std::filesystem::path output_dir = ".";

  std::size_t control_ticks() const;
  std::size_t physics_steps_per_tick() const;
};

// Throws ConfigError naming the offending field.
void validate(const ScenarioConfig& cfg);

// Environment, mitigation and controller configs with the calibration folded in.
env::EnvParams effective_env_params(const ScenarioConfig& cfg);
mitigation::MitigationConfig effective_mitigation(const ScenarioConfig& cfg);

ScenarioConfig scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const ScenarioConfig& cfg);
ScenarioConfig load_scenario(const std::filesystem::path& path);

// Operator command in the scenario/gateway JSON form, e.g.
// {"command": "spray_on", "intensity": 1.0}. Throws ConfigError.
protocol::Command command_from_json(const nlohmann::json& j, const std::string& path = "");
nlohmann::json command_to_json(const protocol::Command& command);

CalibrationParams calibration_from_json(const nlohmann::json& j);
nlohmann::json calibration_to_json(const CalibrationParams& params);
CalibrationParams load_calibration(const std::filesystem::path& path);

// Calibrated defaults shipped with the project (mirrors config/calibration.json).
CalibrationParams default_calibration();

// 175 s bench experiment: 15 s humidifier pulse at t = 0, both sensors
// recording, default controller.
ScenarioConfig bench_replication_config(const CalibrationParams& calibration);

// Writes `content` to `path` via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace smartmask::runner
