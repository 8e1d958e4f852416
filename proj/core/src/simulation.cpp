#include "smartmask/simulation.hpp"

#include <algorithm>
#include <cmath>

#include "smartmask/errors.hpp"
#include "smartmask/random.hpp"

namespace smartmask::runner {

namespace {

// Distinct noise streams for the two sensors.
constexpr std::uint64_t kMaskStream = 0x6d61736bULL;
constexpr std::uint64_t kGroundStream = 0x67726e64ULL;

std::uint64_t sensor_seed(std::uint64_t seed, std::uint64_t stream) {
  DeterministicRng rng(seed, stream);
  return rng.next_u64();
}

sensors::SensorConfig sensor_config(const ScenarioConfig& cfg, sensors::Location location) {
  sensors::SensorConfig s;
  s.location = location;
  s.sample_period = cfg.sample_period;
  if (location == sensors::Location::mask) {
    s.noise_sigma = cfg.mask_noise_sigma;
    s.rng_seed = sensor_seed(cfg.seed, kMaskStream);
  } else {
    s.noise_sigma = cfg.ground_noise_sigma;
    s.rng_seed = sensor_seed(cfg.seed, kGroundStream);
  }
  return s;
}

void fill_background(env::BoxState& box, const std::vector<double>& background) {
  for (std::size_t i = 0; i < background.size() && i < box.number.size(); ++i) {
    box.number[i] = background[i];
  }
}

}  // namespace

CoSimulation::CoSimulation(ScenarioConfig cfg, bool unbounded)
    : cfg_((validate(cfg), std::move(cfg))),
      env_params_(effective_env_params(cfg_)),
      mitigation_cfg_(effective_mitigation(cfg_)),
      controller_cfg_(cfg_.controller),
      env_(env::make_env(cfg_.geometry, cfg_.seed)),
      actuator_(mitigation::full_actuator(mitigation_cfg_)),
      mask_sensor_(sensor_config(cfg_, sensors::Location::mask), cfg_.env_params.droplet_density),
      ground_sensor_(sensor_config(cfg_, sensors::Location::ground),
                     cfg_.env_params.droplet_density),
      unbounded_(unbounded) {
  state_.mode = cfg_.initial_mode;
  fill_background(env_.breathing, cfg_.background);
  fill_background(env_.ground, cfg_.background);
  for (const auto& e : cfg_.events) events_.push_back({e.start, e.event, false});
  std::stable_sort(cfg_.commands.begin(), cfg_.commands.end(),
                   [](const ScheduledCommand& a, const ScheduledCommand& b) {
                     return a.time < b.time;
                   });
}

double CoSimulation::time() const noexcept {
  return static_cast<double>(tick_) * cfg_.control_dt;
}

bool CoSimulation::finished() const noexcept { return done_; }

void CoSimulation::enqueue(QueuedCommand command) { queue_.push_back(std::move(command)); }

void CoSimulation::inject(const env::EmissionEvent& event) {
  const double start = static_cast<double>(physics_steps_) * cfg_.physics_dt;
  events_.push_back({start, event, false});
}

void CoSimulation::apply_spray_command(const controller::SprayCommand& command,
                                       SprayStart& start) {
  if (command.action == controller::SprayCommand::Action::stop) {
    actuator_ = mitigation::stop_spray(actuator_);
    return;
  }
  if (!cfg_.mask_enabled) return;
  try {
    actuator_ = mitigation::start_spray(actuator_, command.params);
    start = command.autonomous ? SprayStart::autonomous : SprayStart::manual;
  } catch (const mitigation::ResourceExhausted&) {
    // Housekeeping already raises the matching alert.
  }
}

TickRecord CoSimulation::advance() {
  if (done_) throw DomainError("advance: scenario already finished");
  const double now = time();
  const double dt = cfg_.control_dt;

  TickRecord rec;
  rec.tick = tick_;
  rec.time = now;

  if (!last_mask_ || now + 1e-9 >= next_sample_time_) {
    last_mask_ = mask_sensor_.sample(env_);
    last_ground_ = ground_sensor_.sample(env_);
    next_sample_time_ += cfg_.sample_period;
  }
  rec.mask = *last_mask_;
  rec.ground = *last_ground_;
  rec.ambient = sensors::sample_ambient(env_);

  state_.spray_active_intensity = actuator_.spraying ? actuator_.params.intensity : 0.0;
  rec.mask_compensated = controller::compensate_self_interference(rec.mask, state_, controller_cfg_);
  rec.risk = controller::classify_risk(rec.mask_compensated, controller_cfg_);

  const auto resources = controller::resource_levels(actuator_, mitigation_cfg_);
  auto hk = controller::housekeeping(state_, resources, rec.mask_compensated, dt, controller_cfg_);
  state_ = std::move(hk.state);
  rec.alerts = std::move(hk.alerts);

  const auto handle = [&](const QueuedCommand& q) {
    auto outcome = controller::handle_command(state_, q.command, q.seq, actuator_, controller_cfg_);
    state_ = std::move(outcome.state);
    if (outcome.config) controller_cfg_ = std::move(*outcome.config);
    if (outcome.command) apply_spray_command(*outcome.command, rec.spray_start);
    rec.acks.push_back({q.origin, outcome.ack});
  };
  while (next_script_command_ < cfg_.commands.size() &&
         cfg_.commands[next_script_command_].time <= now + 1e-9) {
    const auto& scripted = cfg_.commands[next_script_command_];
    handle({0, static_cast<std::uint16_t>(next_script_command_), scripted.command});
    ++next_script_command_;
  }
  while (!queue_.empty()) {
    const QueuedCommand q = std::move(queue_.front());
    queue_.pop_front();
    handle(q);
  }

  if (cfg_.mask_enabled) {
    auto decision = controller::decide(state_, rec.risk, actuator_, controller_cfg_, now);
    state_ = std::move(decision.state);
    if (decision.command) apply_spray_command(*decision.command, rec.spray_start);
  }

  rec.mode = state_.mode;
  rec.spraying = actuator_.spraying;
  rec.spray_intensity = actuator_.spraying ? actuator_.params.intensity : 0.0;
  rec.spray_time_remaining = actuator_.time_remaining;
  rec.liquid_ml = actuator_.liquid_ml;
  rec.battery_mah = actuator_.battery_mah;
  rec.resources = controller::resource_levels(actuator_, mitigation_cfg_);
  rec.cumulative_exposure = state_.cumulative_exposure;

  if (!unbounded_ && tick_ >= cfg_.control_ticks()) {
    done_ = true;
    return rec;
  }
  const std::size_t steps = cfg_.physics_steps_per_tick();
  for (std::size_t k = 0; k < steps; ++k) physics_step(physics_steps_++);
  ++tick_;
  return rec;
}

void CoSimulation::physics_step(std::size_t step_index) {
  const double dt = cfg_.physics_dt;
  const double t0 = static_cast<double>(step_index) * dt;
  const double t1 = t0 + dt;
  for (auto& e : events_) {
    if (env::is_impulsive(e.event.kind)) {
      if (!e.fired && e.start < t1 - 1e-12) {
        env_ = env::apply_emission(env_, e.event, dt);
        e.fired = true;
      }
      continue;
    }
    const double overlap = std::min(t1, e.start + e.event.duration) - std::max(t0, e.start);
    if (overlap > 1e-12) env_ = env::apply_emission(env_, e.event, overlap);
  }
  auto spray = mitigation::spray_step(actuator_, dt, mitigation_cfg_);
  actuator_ = spray.state;
  env_ = env::step(env_, spray.plume, dt, env_params_);
}

RunResult simulate(const ScenarioConfig& cfg) {
  CoSimulation sim(cfg);
  RunResult result{sim.config(), {}};
  result.records.reserve(cfg.control_ticks() + 1);
  while (!sim.finished()) result.records.push_back(sim.advance());
  return result;
}

}  // namespace smartmask::runner
