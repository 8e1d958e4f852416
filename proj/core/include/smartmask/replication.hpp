#pragma once

// Three-run bench experiment and the calibration search that tunes the
// unquantified plume and emission parameters against its reported metrics.
//
//   (a) humidifier pulse, mask off
//   (b) mask spraying at full intensity in clean air (self-mist signature)
//   (c) humidifier pulse, mask on in automatic mode

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smartmask/report.hpp"
#include "smartmask/scenario.hpp"

namespace smartmask::runner {

// Metric names used in targets files and replication summaries.
inline constexpr const char* kReductionRaw = "reduction_pct_raw";
inline constexpr const char* kReductionCompensated = "reduction_pct_compensated";
inline constexpr const char* kGroundMassFine = "ground_mass_increase_pct_0p3_1p0";
inline constexpr const char* kGroundMassCoarse = "ground_mass_increase_pct_1p0_2p5";
inline constexpr const char* kGroundNumberFine = "ground_number_increase_pct_0p3_1p0";
inline constexpr const char* kGroundNumberCoarse = "ground_number_increase_pct_1p0_2p5";

struct ReplicationResult {
  CalibrationParams calibration;
  RunResult humidifier_only;
  RunSummary humidifier_only_summary;
  std::optional<RunResult> spray_clean;
  std::optional<RunSummary> spray_clean_summary;
  std::optional<RunResult> mitigated;
  std::optional<RunSummary> mitigated_summary;
  std::vector<double> self_mist_signature;
  // Run (c) mask 0.3-1.0 um series with the self-generated count removed:
  // run (b)'s trace, aligned to each spray start and scaled by its intensity.
  std::vector<double> compensated_fine_series;
  Comparison comparison;
  // Metric name -> value; empty when the mask is off.
  std::map<std::string, double> metrics;
};

// Self-mist signature: mean mask reading over the last `window` spraying
// ticks of a clean-air spray run.
std::vector<double> measure_signature(const RunResult& spray_run, std::size_t window = 3);

// Subtracts the clean-air spray trace from `mitigated`, per bin, clamped at 0,
// and returns the 0.3-1.0 um sum per tick.
std::vector<double> subtract_self_mist(const RunResult& mitigated, const RunResult& spray_clean);

// With mask_enabled = false only run (a) is performed.
ReplicationResult replicate_paper_experiment(const CalibrationParams& calibration,
                                             bool mask_enabled = true);

nlohmann::json replication_to_json(const ReplicationResult& result);

struct Target {
  double value = 0.0;
  double tolerance = 0.0;  // absolute, percentage points
};

using Targets = std::map<std::string, Target>;

// The six bench observation metrics with their acceptance tolerances.
Targets bench_targets();
Targets targets_from_json(const nlohmann::json& j);
nlohmann::json targets_to_json(const Targets& targets);
Targets load_targets(const std::filesystem::path& path);

struct Residual {
  std::string metric;
  double target = 0.0;
  double tolerance = 0.0;
  std::optional<double> value;
  bool within = false;
};

struct CalibrationReport {
  CalibrationParams params;
  double objective = 0.0;
  std::vector<Residual> residuals;
  bool within_tolerance = false;
  std::size_t mitigated_sprays = 0;
  std::size_t evaluations = 0;
};

// Sum of squared relative errors, plus a unit penalty and a squared term
// for any distance beyond 95% of a metric's tolerance, plus a penalty unless
// run (c) fires exactly one spray. Missing metrics count as a relative error
// of 1.
double calibration_objective(const ReplicationResult& result, const Targets& targets);

std::vector<Residual> residuals(const ReplicationResult& result, const Targets& targets);

struct CalibrationBounds {
  CalibrationParams lower{1e-3, 1e-5, 1e-4, 1e7};
  CalibrationParams upper{1.0, 1e-1, 1e-1, 1e9};
};

struct CalibrationOptions {
  // Halton points drawn log-uniformly within the bounds before the local search.
  std::size_t global_samples = 512;
  // Coordinate-descent sweeps over log-spaced grids that narrow each sweep.
  std::size_t sweeps = 4;
  std::size_t grid_points = 13;
  CalibrationBounds bounds{};
  // Extra candidate for the starting point, e.g. the shipped defaults.
  std::optional<CalibrationParams> start;
};

CalibrationReport calibrate(const Targets& targets, const CalibrationOptions& options = {});

nlohmann::json calibration_report_to_json(const CalibrationReport& report);

}  // namespace smartmask::runner
