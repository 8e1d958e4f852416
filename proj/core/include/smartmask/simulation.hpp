#pragma once

// Fixed-tick co-simulation of environment, sensors, controller and actuator.
//
// Each control tick at time t:
//   1. both sensors sample the environment at t;
//   2. the controller compensates the mask reading, classifies risk and runs
//      housekeeping;
//   3. commands due at t (scripted, then queued) are handled in order;
//   4. decide() may start an autonomous spray;
//   5. the tick record is emitted;
//   6. physics advances by control_dt in physics_dt steps (emissions, actuator,
//      environment).

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "smartmask/controller.hpp"
#include "smartmask/env.hpp"
#include "smartmask/mitigation.hpp"
#include "smartmask/protocol.hpp"
#include "smartmask/scenario.hpp"
#include "smartmask/sensors.hpp"

namespace smartmask::runner {

enum class SprayStart { none, autonomous, manual };

// Command received from outside the loop. `origin` identifies the sender
// (0 = scenario script) so the reply can be routed back.
struct QueuedCommand {
  std::uint64_t origin = 0;
  std::uint16_t seq = 0;
  protocol::Command command;
};

struct RoutedAck {
  std::uint64_t origin = 0;
  protocol::Ack ack;
};

struct TickRecord {
  std::size_t tick = 0;
  double time = 0.0;
  sensors::PmReading mask;
  sensors::PmReading mask_compensated;
  sensors::PmReading ground;
  sensors::AmbientReading ambient;
  controller::RiskLevel risk = controller::RiskLevel::low;
  controller::Mode mode = controller::Mode::automatic;
  // Actuator state after this tick's decisions.
  bool spraying = false;
  double spray_intensity = 0.0;
  double spray_time_remaining = 0.0;
  double liquid_ml = 0.0;
  double battery_mah = 0.0;
  controller::ResourceLevels resources;
  double cumulative_exposure = 0.0;
  SprayStart spray_start = SprayStart::none;
  std::vector<controller::AlertCode> alerts;
  std::vector<RoutedAck> acks;
};

class CoSimulation {
 public:
  // Validates `cfg`; throws ConfigError. An unbounded simulation ignores
  // cfg.duration and never finishes.
  explicit CoSimulation(ScenarioConfig cfg, bool unbounded = false);

  const ScenarioConfig& config() const noexcept { return cfg_; }
  const env::EnvState& environment() const noexcept { return env_; }
  const mitigation::ActuatorState& actuator() const noexcept { return actuator_; }
  const controller::ControllerState& controller_state() const noexcept { return state_; }
  const controller::ControllerConfig& controller_config() const noexcept { return controller_cfg_; }
  const mitigation::MitigationConfig& mitigation_config() const noexcept { return mitigation_cfg_; }

  std::size_t tick() const noexcept { return tick_; }
  double time() const noexcept;
  // True once the record at t = duration has been produced.
  bool finished() const noexcept;

  // Commands are handled at the next tick boundary in arrival order.
  void enqueue(QueuedCommand command);
  // Schedules an emission starting at the next physics step.
  void inject(const env::EmissionEvent& event);

  // Runs control for the current tick, then advances physics to the next
  // one. Only the final tick skips the physics advance.
  TickRecord advance();

 private:
  struct ActiveEvent {
    double start = 0.0;
    env::EmissionEvent event;
    bool fired = false;
  };

  void apply_spray_command(const controller::SprayCommand& command, SprayStart& start);
  void physics_step(std::size_t step_index);

  ScenarioConfig cfg_;
  env::EnvParams env_params_;
  mitigation::MitigationConfig mitigation_cfg_;
  controller::ControllerConfig controller_cfg_;
  env::EnvState env_;
  mitigation::ActuatorState actuator_;
  controller::ControllerState state_;
  sensors::PmSensor mask_sensor_;
  sensors::PmSensor ground_sensor_;
  std::optional<sensors::PmReading> last_mask_;
  std::optional<sensors::PmReading> last_ground_;
  double next_sample_time_ = 0.0;
  std::vector<ActiveEvent> events_;
  std::size_t next_script_command_ = 0;
  std::deque<QueuedCommand> queue_;
  std::size_t tick_ = 0;
  std::size_t physics_steps_ = 0;
  bool unbounded_ = false;
  bool done_ = false;
};

struct RunResult {
  ScenarioConfig config;
  std::vector<TickRecord> records;
};

// Runs the scenario to completion without writing any files.
RunResult simulate(const ScenarioConfig& cfg);

}  // namespace smartmask::runner
