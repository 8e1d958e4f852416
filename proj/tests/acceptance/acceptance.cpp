// Acceptance gate: one PASS/FAIL line per primary criterion. Exits non-zero
// if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "properties.hpp"
#include "smartmask/crc32.hpp"
#include "smartmask/replication.hpp"
#include "smartmask/report.hpp"
#include "smartmask/simulation.hpp"

namespace {

using namespace smartmask;
using testing::Failure;
using testing::Gen;

// Pinned tolerances.
constexpr double kRuntimeLimitS = 10.0;
constexpr double kStokesRelTol = 1e-9;
constexpr std::size_t kStokesCases = 1000;
constexpr double kSettlingRelTol = 0.01;
constexpr double kCoalescedRelTol = 1e-12;
constexpr double kThirdMomentTol = 1e-3;
constexpr double kFluxTol = 1e-9;
constexpr std::size_t kConservationCases = 10'000;
constexpr std::size_t kRandomSteps = 1'000'000;
constexpr std::size_t kTrajectories = 10'000;
constexpr std::size_t kTrajectoryTicks = 200;
constexpr double kBatteryLifeS = 8.0 * 3600.0;
constexpr std::size_t kRoundTrips = 10'000;
constexpr std::size_t kTamperFrames = 1000;
constexpr std::size_t kReassemblyTrials = 2000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const char* name, const Outcome& o) {
  if (!o.pass) ++failures;
  std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
  std::fflush(stdout);
}

std::string metric_line(const runner::Residual& r) {
  return r.value ? fmt::format("{} = {:.2f} (target {} +/- {})", r.metric, *r.value, r.target, r.tolerance)
                 : fmt::format("{} missing", r.metric);
}

Outcome replication_group(const std::vector<runner::Residual>& residuals,
                          const std::vector<std::string>& metrics) {
  Outcome o{true, {}};
  for (const auto& name : metrics) {
    for (const auto& r : residuals) {
      if (r.metric != name) continue;
      o.pass = o.pass && r.within;
      o.detail += (o.detail.empty() ? "" : "; ") + metric_line(r);
    }
  }
  return o;
}

// Independent Stokes evaluation in SI units with the same constants.
double stokes_oracle(double d_um, double rho_g_cm3) {
  const double d = d_um * 1e-6;
  return rho_g_cm3 * 1000.0 * 9.81 * d * d / (18.0 * 1.81e-5);
}

Outcome physics_oracles() {
  Gen gen(2001);
  double worst_stokes = 0.0;
  for (std::size_t i = 0; i < kStokesCases; ++i) {
    const double d = gen.log_uniform(0.01, 100.0);
    const double rho = gen.uniform(0.5, 3.0);
    const double expected = stokes_oracle(d, rho);
    worst_stokes = std::max(worst_stokes,
                            std::abs(env::stokes_settling_velocity(d, rho) - expected) / expected);
  }

  const env::BinGrid grid({10.0 / std::sqrt(2.0), 10.0 * std::sqrt(2.0)});
  env::EnvState state = env::make_env({}, 0, grid);
  state.breathing.relative_humidity = 100.0;
  state.breathing.number[0] = 1000.0;
  env::EnvParams params;
  params.evaporation_constant = 0.0;
  for (int i = 0; i < 1000; ++i) state = env::step(state, std::nullopt, 0.1, params);
  const double expected = 1000.0 * std::exp(-stokes_oracle(10.0, 1.0) / 1.8 * 100.0);
  const double settling_err = std::abs(state.breathing.number[0] - expected) / expected;

  double worst_coalesced = 0.0;
  for (std::size_t i = 0; i < kStokesCases; ++i) {
    const double a = gen.log_uniform(0.1, 20.0);
    const double b = gen.log_uniform(0.1, 20.0);
    const double d = env::coalesced_diameter(a, b);
    const double volume_err = std::abs(d * d * d - (a * a * a + b * b * b)) / (a * a * a + b * b * b);
    worst_coalesced = std::max(worst_coalesced, volume_err);
  }

  const bool pass = worst_stokes <= kStokesRelTol && settling_err <= kSettlingRelTol &&
                    worst_coalesced <= kCoalescedRelTol;
  return {pass, fmt::format("stokes worst {:.2e} (tol {:.0e}); settling at 100 s {:.3f}% (tol 1%); "
                            "coalesced volume worst {:.2e} (tol {:.0e})",
                            worst_stokes, kStokesRelTol, settling_err * 100.0, worst_coalesced,
                            kCoalescedRelTol)};
}

Outcome conservation() {
  double worst_moment = 0.0;
  double worst_flux = 0.0;
  if (auto f = testing::coalescence_volume(3001, kConservationCases, kThirdMomentTol, &worst_moment)) {
    return {false, *f};
  }
  if (auto f = testing::settling_flux(3002, kConservationCases, kFluxTol, &worst_flux)) {
    return {false, *f};
  }
  if (auto f = testing::non_negative_steps(3003, kRandomSteps)) return {false, *f};
  return {true, fmt::format("third moment worst {:.2e} (tol {:.0e}); flux worst {:.2e} (tol {:.0e}); "
                            "{} random steps non-negative",
                            worst_moment, kThirdMomentTol, worst_flux, kFluxTol, kRandomSteps)};
}

Outcome controller_properties() {
  if (auto f = testing::risk_monotonicity(4001, 100'000)) return {false, "monotonicity: " + *f};
  if (auto f = testing::compensation_identity(4002, 100'000)) return {false, "compensation: " + *f};
  testing::TrajectoryStats stats;
  for (std::uint64_t seed = 0; seed < kTrajectories; ++seed) {
    if (auto f = testing::controller_trajectory(seed, kTrajectoryTicks, &stats)) {
      return {false, fmt::format("trajectory {}: {}", seed, *f)};
    }
    if (auto f = testing::manual_silence(seed, kTrajectoryTicks)) {
      return {false, fmt::format("manual trajectory {}: {}", seed, *f)};
    }
  }
  return {true, fmt::format("{} automatic + {} manual trajectories, {} autonomous sprays, {} alerts",
                            kTrajectories, kTrajectories, stats.autonomous_sprays, stats.alerts)};
}

Outcome resource_model() {
  mitigation::MitigationConfig cfg;
  cfg.battery_capacity_mah = 2000.0;
  // Liquid must not be the limit here.
  cfg.reservoir_ml = 1e6;
  const double control_dt = 1.0;
  const int steps_per_tick = 10;
  auto state = mitigation::start_spray(mitigation::full_actuator(cfg), {1.0, 1e9, 1.0});
  double t = 0.0;
  bool negative = false;
  while (state.spraying && t < 2.0 * kBatteryLifeS) {
    for (int i = 0; i < steps_per_tick; ++i) {
      state = mitigation::spray_step(state, control_dt / steps_per_tick, cfg).state;
      negative = negative || state.battery_mah < 0.0 || state.liquid_ml < 0.0;
    }
    t += control_dt;
  }
  const double err = std::abs(t - kBatteryLifeS);

  // Random schedules on tiny resources must never go negative.
  Gen gen(5001);
  for (int trial = 0; trial < 1000 && !negative; ++trial) {
    mitigation::MitigationConfig small;
    small.reservoir_ml = gen.uniform(0.001, 1.0);
    small.battery_capacity_mah = gen.uniform(0.01, 10.0);
    auto s = mitigation::full_actuator(small);
    for (int i = 0; i < 500; ++i) {
      if (!s.spraying && s.liquid_ml > 0.0 && s.battery_mah > 0.0 && gen.coin(0.3)) {
        s = mitigation::start_spray(s, {gen.uniform(0.0, 1.0), gen.uniform(0.1, 100.0), 1.0});
      }
      s = mitigation::spray_step(s, gen.uniform(0.01, 0.5), small).state;
      negative = negative || s.battery_mah < 0.0 || s.liquid_ml < 0.0;
    }
  }
  return {err <= control_dt && !negative,
          fmt::format("exhausted at {:.0f} s (expected {:.0f} s +/- {:.0f}); resources {}", t,
                      kBatteryLifeS, control_dt, negative ? "went negative" : "never negative")};
}

Outcome protocol_suite() {
  const std::string check = "123456789";
  const auto crc = protocol::crc32(std::span(reinterpret_cast<const std::uint8_t*>(check.data()), check.size()));
  if (crc != 0xCBF43926u) return {false, fmt::format("crc32 check value {:#010x}", crc)};
  if (auto f = testing::round_trips(6001, kRoundTrips, false)) return {false, "unkeyed: " + *f};
  if (auto f = testing::round_trips(6002, kRoundTrips, true)) return {false, "keyed: " + *f};
  std::size_t mutations = 0;
  if (auto f = testing::tamper_rejection(6003, kTamperFrames, &mutations, true)) return {false, *f};
  if (auto f = testing::reassembly(6004, kReassemblyTrials)) return {false, *f};
  return {true, fmt::format("crc32 0xCBF43926; {} unkeyed + {} keyed round trips; {} mutations of {} "
                            "keyed frames rejected; {} reassembly trials",
                            kRoundTrips, kRoundTrips, mutations, kTamperFrames, kReassemblyTrials)};
}

Outcome determinism() {
  const auto cfg = runner::bench_replication_config(runner::default_calibration());
  const auto a = runner::timeseries_csv(runner::simulate(cfg));
  const auto b = runner::timeseries_csv(runner::simulate(cfg));
  return {a == b && !a.empty(), fmt::format("{} bytes, {}", a.size(), a == b ? "identical" : "differ")};
}

}  // namespace

int main() {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const auto replication = runner::replicate_paper_experiment(runner::default_calibration());
  const double runtime = std::chrono::duration<double>(clock::now() - start).count();
  const auto residuals = runner::residuals(replication, runner::bench_targets());

  auto raw = replication_group(residuals, {runner::kReductionRaw});
  raw.pass = raw.pass && runtime < kRuntimeLimitS;
  raw.detail += fmt::format("; runtime {:.2f} s (limit {:.0f} s)", runtime, kRuntimeLimitS);
  report("replication_raw_reduction", raw);
  report("replication_compensated_reduction",
         replication_group(residuals, {runner::kReductionCompensated}));
  report("replication_ground_loading",
         replication_group(residuals, {runner::kGroundMassFine, runner::kGroundMassCoarse,
                                       runner::kGroundNumberFine, runner::kGroundNumberCoarse}));
  report("physics_oracles", physics_oracles());
  report("conservation", conservation());
  report("controller_properties", controller_properties());
  report("resource_model", resource_model());
  report("protocol", protocol_suite());
  report("determinism", determinism());

  std::printf("summary: %d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
