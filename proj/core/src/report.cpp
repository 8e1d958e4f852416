#include "smartmask/report.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "smartmask/errors.hpp"

namespace smartmask::runner {

namespace {

using nlohmann::json;

constexpr double kFineLo = 0.3;
constexpr double kFineHi = 1.0;
constexpr double kCoarseLo = 1.0;
constexpr double kCoarseHi = 2.5;

std::string edge_label(double edge) {
  std::string s = fmt::format("{:.1f}", edge);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

std::string num(double v) { return fmt::format("{:.9g}", v); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string_view to_string(SprayStart start) {
  switch (start) {
    case SprayStart::none: return "";
    case SprayStart::autonomous: return "autonomous";
    case SprayStart::manual: return "manual";
  }
  return "";
}

std::optional<double> pct_change(double baseline, double value) {
  if (!(baseline > 0.0)) return std::nullopt;
  return 100.0 * (value - baseline) / baseline;
}

std::optional<double> negate(std::optional<double> v) {
  if (v) return -*v;
  return v;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void accumulate(std::vector<double>& sum, const std::vector<double>& values) {
  if (sum.size() < values.size()) sum.resize(values.size(), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) sum[i] += values[i];
}

json by_bin(const std::vector<double>& values, const env::BinGrid& grid) {
  json out = json::object();
  for (std::size_t i = 0; i < values.size() && i < grid.size(); ++i) {
    out[bin_label(grid, i)] = values[i];
  }
  return out;
}

}  // namespace

std::string bin_label(const env::BinGrid& grid, std::size_t bin) {
  return edge_label(grid.lower(bin)) + "_" + edge_label(grid.upper(bin));
}

double range_sum(const std::vector<double>& per_bin, const env::BinGrid& grid, double lo,
                 double hi) {
  double sum = 0.0;
  for (std::size_t i = 0; i < per_bin.size() && i < grid.size(); ++i) {
    if (grid.lower(i) >= lo - 1e-12 && grid.upper(i) <= hi + 1e-12) sum += per_bin[i];
  }
  return sum;
}

RunSummary summarize(const RunResult& result) {
  RunSummary s;
  const env::BinGrid grid;
  s.rows = result.records.size();
  if (s.rows == 0) return s;
  for (const auto& r : result.records) {
    s.avg_mask_n_fine += range_sum(r.mask.number, grid, kFineLo, kFineHi);
    s.avg_mask_n_fine_compensated += range_sum(r.mask_compensated.number, grid, kFineLo, kFineHi);
    accumulate(s.avg_mask_n_by_bin, r.mask.number);
    accumulate(s.avg_ground_mass_by_bin, r.ground.mass);
    accumulate(s.avg_ground_n_by_bin, r.ground.number);
    if (r.spray_start != SprayStart::none) {
      ++s.spray_count;
      if (r.spray_start == SprayStart::autonomous) ++s.autonomous_spray_count;
      s.spray_start_times.push_back(r.time);
    }
    if (r.spraying) s.spraying_seconds += result.config.control_dt;
    for (const auto alert : r.alerts) s.alerts.emplace_back(controller::to_string(alert));
  }
  const double n = static_cast<double>(s.rows);
  s.avg_mask_n_fine /= n;
  s.avg_mask_n_fine_compensated /= n;
  for (auto* v : {&s.avg_mask_n_by_bin, &s.avg_ground_mass_by_bin, &s.avg_ground_n_by_bin}) {
    for (double& x : *v) x /= n;
  }
  const auto& last = result.records.back();
  s.final_liquid_ml = last.liquid_ml;
  s.final_battery_mah = last.battery_mah;
  s.cumulative_exposure = last.cumulative_exposure;
  return s;
}

Comparison compare(const RunSummary& baseline, const RunSummary& mitigated,
                   const env::BinGrid& grid) {
  Comparison c;
  c.reduction_pct_raw = negate(pct_change(baseline.avg_mask_n_fine, mitigated.avg_mask_n_fine));
  c.reduction_pct_compensated =
      negate(pct_change(baseline.avg_mask_n_fine, mitigated.avg_mask_n_fine_compensated));
  const auto range_change = [&](const std::vector<double>& base, const std::vector<double>& mit,
                                double lo, double hi) {
    return pct_change(range_sum(base, grid, lo, hi), range_sum(mit, grid, lo, hi));
  };
  c.ground_mass_increase_fine = range_change(baseline.avg_ground_mass_by_bin,
                                             mitigated.avg_ground_mass_by_bin, kFineLo, kFineHi);
  c.ground_mass_increase_coarse = range_change(
      baseline.avg_ground_mass_by_bin, mitigated.avg_ground_mass_by_bin, kCoarseLo, kCoarseHi);
  c.ground_n_increase_fine = range_change(baseline.avg_ground_n_by_bin,
                                          mitigated.avg_ground_n_by_bin, kFineLo, kFineHi);
  c.ground_n_increase_coarse = range_change(baseline.avg_ground_n_by_bin,
                                            mitigated.avg_ground_n_by_bin, kCoarseLo, kCoarseHi);
  const std::size_t bins = std::min(baseline.avg_ground_n_by_bin.size(),
                                    mitigated.avg_ground_n_by_bin.size());
  for (std::size_t i = 0; i < bins; ++i) {
    c.ground_mass_increase_by_bin.push_back(
        pct_change(baseline.avg_ground_mass_by_bin[i], mitigated.avg_ground_mass_by_bin[i]));
    c.ground_n_increase_by_bin.push_back(
        pct_change(baseline.avg_ground_n_by_bin[i], mitigated.avg_ground_n_by_bin[i]));
  }
  return c;
}

std::vector<std::string> column_names(const env::BinGrid& grid) {
  std::vector<std::string> cols{"time_s"};
  for (const char* prefix : {"mask_n_", "mask_m_", "mask_comp_n_", "ground_n_", "ground_m_"}) {
    for (std::size_t i = 0; i < grid.size(); ++i) cols.push_back(prefix + bin_label(grid, i));
  }
  for (const char* c :
       {"temperature_c", "rh_pct", "risk", "mode", "spraying", "spray_intensity",
        "spray_time_remaining_s", "spray_start", "liquid_ml", "battery_mah", "liquid_pct",
        "battery_pct", "cumulative_exposure", "alerts"}) {
    cols.emplace_back(c);
  }
  return cols;
}

std::string timeseries_csv(const RunResult& result) {
  const env::BinGrid grid;
  std::string out;
  const auto cols = column_names(grid);
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ',';
    out += csv_field(cols[i]);
  }
  out += "\r\n";
  for (const auto& r : result.records) {
    std::vector<std::string> f;
    f.reserve(cols.size());
    f.push_back(num(r.time));
    for (const auto* v : {&r.mask.number, &r.mask.mass, &r.mask_compensated.number,
                          &r.ground.number, &r.ground.mass}) {
      for (std::size_t i = 0; i < grid.size(); ++i) f.push_back(num(i < v->size() ? (*v)[i] : 0.0));
    }
    f.push_back(num(r.ambient.temperature_c));
    f.push_back(num(r.ambient.relative_humidity));
    f.emplace_back(controller::to_string(r.risk));
    f.emplace_back(controller::to_string(r.mode));
    f.push_back(r.spraying ? "1" : "0");
    f.push_back(num(r.spray_intensity));
    f.push_back(num(r.spray_time_remaining));
    f.emplace_back(to_string(r.spray_start));
    f.push_back(num(r.liquid_ml));
    f.push_back(num(r.battery_mah));
    f.push_back(num(r.resources.liquid_pct));
    f.push_back(num(r.resources.battery_pct));
    f.push_back(num(r.cumulative_exposure));
    std::string alerts;
    for (const auto a : r.alerts) {
      if (!alerts.empty()) alerts += ';';
      alerts += controller::to_string(a);
    }
    f.push_back(alerts);
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (i) out += ',';
      out += csv_field(f[i]);
    }
    out += "\r\n";
  }
  return out;
}

json summary_to_json(const RunSummary& s, const env::BinGrid& grid) {
  return json{
      {"rows", s.rows},
      {"avg_mask_N_0p3_1p0", s.avg_mask_n_fine},
      {"avg_mask_N_compensated", s.avg_mask_n_fine_compensated},
      {"avg_mask_N_by_bin", by_bin(s.avg_mask_n_by_bin, grid)},
      {"avg_ground_mass_by_bin", by_bin(s.avg_ground_mass_by_bin, grid)},
      {"avg_ground_N_by_bin", by_bin(s.avg_ground_n_by_bin, grid)},
      {"sprays",
       {{"count", s.spray_count},
        {"autonomous", s.autonomous_spray_count},
        {"start_times_s", s.spray_start_times},
        {"spraying_s", s.spraying_seconds}}},
      {"resources",
       {{"final_liquid_ml", s.final_liquid_ml}, {"final_battery_mah", s.final_battery_mah}}},
      {"cumulative_exposure", s.cumulative_exposure},
      {"alerts", s.alerts},
  };
}

json comparison_to_json(const Comparison& c) {
  json mass_bins = json::array();
  json n_bins = json::array();
  for (const auto& v : c.ground_mass_increase_by_bin) mass_bins.push_back(optional_json(v));
  for (const auto& v : c.ground_n_increase_by_bin) n_bins.push_back(optional_json(v));
  return json{
      {"reduction_pct_raw", optional_json(c.reduction_pct_raw)},
      {"reduction_pct_compensated", optional_json(c.reduction_pct_compensated)},
      {"ground_increase_pct",
       {{"mass_0p3_1p0", optional_json(c.ground_mass_increase_fine)},
        {"mass_1p0_2p5", optional_json(c.ground_mass_increase_coarse)},
        {"number_0p3_1p0", optional_json(c.ground_n_increase_fine)},
        {"number_1p0_2p5", optional_json(c.ground_n_increase_coarse)},
        {"mass_by_bin", mass_bins},
        {"number_by_bin", n_bins}}},
  };
}

RunReport run_scenario(const ScenarioConfig& cfg) {
  RunReport report;
  report.result = simulate(cfg);
  report.summary = summarize(report.result);
  const env::BinGrid grid;
  if (cfg.mask_enabled) {
    ScenarioConfig base = cfg;
    base.mask_enabled = false;
    report.baseline = summarize(simulate(base));
    report.comparison = compare(*report.baseline, report.summary, grid);
  }
  return report;
}

json report_to_json(const RunReport& report) {
  const env::BinGrid grid;
  const auto& cfg = report.result.config;
  json metrics = summary_to_json(report.summary, grid);
  metrics.update(comparison_to_json(report.comparison));
  return json{
      {"schema_version", kSummarySchemaVersion},
      {"kind", "run"},
      {"scenario",
       {{"seed", cfg.seed},
        {"duration_s", cfg.duration},
        {"physics_dt_s", cfg.physics_dt},
        {"control_dt_s", cfg.control_dt},
        {"mask_enabled", cfg.mask_enabled}}},
      {"metrics", metrics},
      {"baseline", report.baseline ? summary_to_json(*report.baseline, grid) : json(nullptr)},
  };
}

void write_report(const RunReport& report, const std::filesystem::path& dir) {
  write_file_atomic(dir / "timeseries.csv", timeseries_csv(report.result));
  write_file_atomic(dir / "summary.json", report_to_json(report).dump(2) + "\n");
}

}  // namespace smartmask::runner
