#pragma once

// Time-series and summary persistence for scenario runs.
//
// timeseries.csv has one row per control tick (t = 0 .. duration) and a fixed
// header; see column_names(). summary.json follows docs/summary.schema.json.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smartmask/env.hpp"
#include "smartmask/simulation.hpp"

namespace smartmask::runner {

inline constexpr int kSummarySchemaVersion = 1;

// "0p3_0p5" style label for a bin's edges.
std::string bin_label(const env::BinGrid& grid, std::size_t bin);

// Sum of the entries whose bins lie within [lo, hi] um.
double range_sum(const std::vector<double>& per_bin, const env::BinGrid& grid, double lo,
                 double hi);

struct RunSummary {
  std::size_t rows = 0;
  // Time averages over every row of the series.
  double avg_mask_n_fine = 0.0;              // 0.3-1.0 um, raw
  double avg_mask_n_fine_compensated = 0.0;  // 0.3-1.0 um, compensated
  std::vector<double> avg_mask_n_by_bin;
  std::vector<double> avg_ground_mass_by_bin;
  std::vector<double> avg_ground_n_by_bin;
  std::size_t spray_count = 0;
  std::size_t autonomous_spray_count = 0;
  std::vector<double> spray_start_times;
  double spraying_seconds = 0.0;
  double final_liquid_ml = 0.0;
  double final_battery_mah = 0.0;
  double cumulative_exposure = 0.0;
  std::vector<std::string> alerts;
};

RunSummary summarize(const RunResult& result);

// Percent changes of a mitigated run relative to its unmitigated baseline.
// Entries are empty when the baseline average is zero.
struct Comparison {
  std::optional<double> reduction_pct_raw;
  std::optional<double> reduction_pct_compensated;
  std::optional<double> ground_mass_increase_fine;    // 0.3-1.0 um
  std::optional<double> ground_mass_increase_coarse;  // 1.0-2.5 um
  std::optional<double> ground_n_increase_fine;
  std::optional<double> ground_n_increase_coarse;
  std::vector<std::optional<double>> ground_mass_increase_by_bin;
  std::vector<std::optional<double>> ground_n_increase_by_bin;
};

Comparison compare(const RunSummary& baseline, const RunSummary& mitigated,
                   const env::BinGrid& grid);

std::vector<std::string> column_names(const env::BinGrid& grid);
std::string timeseries_csv(const RunResult& result);

nlohmann::json summary_to_json(const RunSummary& summary, const env::BinGrid& grid);
nlohmann::json comparison_to_json(const Comparison& comparison);

struct RunReport {
  RunResult result;
  RunSummary summary;
  // Same scenario with the mask disabled; present when the mask is enabled.
  std::optional<RunSummary> baseline;
  Comparison comparison;
};

// Runs `cfg` and, if the mask is enabled, its unmitigated counterfactual.
RunReport run_scenario(const ScenarioConfig& cfg);

nlohmann::json report_to_json(const RunReport& report);

// Writes timeseries.csv and summary.json into `dir`; throws IoError.
void write_report(const RunReport& report, const std::filesystem::path& dir);

}  // namespace smartmask::runner
