#include "smartmask/replication.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "smartmask/errors.hpp"
#include "smartmask/logging.hpp"

namespace smartmask::runner {

namespace {

using nlohmann::json;

constexpr double kSprayPenalty = 10.0;
constexpr double kWindowWeight = 10.0;
// Fraction of each tolerance the fit aims to stay inside.
constexpr double kWindowGuard = 0.95;

ScenarioConfig humidifier_only(const CalibrationParams& calibration) {
  ScenarioConfig cfg = bench_replication_config(calibration);
  cfg.mask_enabled = false;
  return cfg;
}

ScenarioConfig spray_clean_air(const CalibrationParams& calibration) {
  ScenarioConfig cfg = bench_replication_config(calibration);
  cfg.events.clear();
  protocol::SprayOnArgs args;
  args.intensity = 1.0f;
  args.duration = static_cast<float>(cfg.controller.spray_duration);
  args.angle_factor = 1.0f;
  cfg.commands.push_back({0.0, protocol::make_set_mode(1)});
  cfg.commands.push_back({0.0, protocol::make_spray_on(args)});
  return cfg;
}

void put(std::map<std::string, double>& metrics, const char* name,
         const std::optional<double>& value) {
  if (value) metrics[name] = *value;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Radical inverse of k in the given base, in [0, 1).
double halton(std::size_t k, int base) {
  double f = 1.0;
  double r = 0.0;
  while (k > 0) {
    f /= base;
    r += f * static_cast<double>(k % static_cast<std::size_t>(base));
    k /= static_cast<std::size_t>(base);
  }
  return r;
}

}  // namespace

std::vector<double> measure_signature(const RunResult& spray_run, std::size_t window) {
  std::vector<const TickRecord*> spraying;
  for (const auto& r : spray_run.records) {
    if (r.spraying && r.spray_intensity > 0.0) spraying.push_back(&r);
  }
  const std::size_t bins = env::BinGrid{}.size();
  std::vector<double> signature(bins, 0.0);
  if (spraying.empty() || window == 0) return signature;
  const std::size_t n = std::min(window, spraying.size());
  for (std::size_t k = spraying.size() - n; k < spraying.size(); ++k) {
    const auto& r = *spraying[k];
    for (std::size_t i = 0; i < bins && i < r.mask.number.size(); ++i) {
      signature[i] += r.mask.number[i] / r.spray_intensity;
    }
  }
  for (double& s : signature) s /= static_cast<double>(n);
  return signature;
}

std::vector<double> subtract_self_mist(const RunResult& mitigated, const RunResult& spray_clean) {
  const env::BinGrid grid;
  std::vector<std::pair<std::size_t, double>> starts;
  for (const auto& r : mitigated.records) {
    if (r.spray_start != SprayStart::none) starts.emplace_back(r.tick, r.spray_intensity);
  }
  std::vector<double> out;
  out.reserve(mitigated.records.size());
  for (const auto& r : mitigated.records) {
    std::vector<double> corrected = r.mask.number;
    for (const auto& [start, intensity] : starts) {
      if (r.tick < start) continue;
      const std::size_t offset = r.tick - start;
      if (offset >= spray_clean.records.size()) continue;
      const auto& self = spray_clean.records[offset].mask.number;
      for (std::size_t i = 0; i < corrected.size() && i < self.size(); ++i) {
        corrected[i] -= intensity * self[i];
      }
    }
    for (double& v : corrected) v = std::max(0.0, v);
    out.push_back(range_sum(corrected, grid, 0.3, 1.0));
  }
  return out;
}

ReplicationResult replicate_paper_experiment(const CalibrationParams& calibration,
                                             bool mask_enabled) {
  ReplicationResult out;
  out.calibration = calibration;
  out.humidifier_only = simulate(humidifier_only(calibration));
  out.humidifier_only_summary = summarize(out.humidifier_only);
  if (!mask_enabled) return out;

  out.spray_clean = simulate(spray_clean_air(calibration));
  out.spray_clean_summary = summarize(*out.spray_clean);
  out.self_mist_signature = measure_signature(*out.spray_clean);

  ScenarioConfig mitigated = bench_replication_config(calibration);
  mitigated.controller.self_mist_signature = out.self_mist_signature;
  out.mitigated = simulate(mitigated);
  out.mitigated_summary = summarize(*out.mitigated);

  const env::BinGrid grid;
  out.comparison = compare(out.humidifier_only_summary, *out.mitigated_summary, grid);
  out.compensated_fine_series = subtract_self_mist(*out.mitigated, *out.spray_clean);
  if (!out.compensated_fine_series.empty() && out.humidifier_only_summary.avg_mask_n_fine > 0.0) {
    double avg = 0.0;
    for (double v : out.compensated_fine_series) avg += v;
    avg /= static_cast<double>(out.compensated_fine_series.size());
    out.comparison.reduction_pct_compensated =
        100.0 * (1.0 - avg / out.humidifier_only_summary.avg_mask_n_fine);
  }
  const auto& c = out.comparison;
  put(out.metrics, kReductionRaw, c.reduction_pct_raw);
  put(out.metrics, kReductionCompensated, c.reduction_pct_compensated);
  put(out.metrics, kGroundMassFine, c.ground_mass_increase_fine);
  put(out.metrics, kGroundMassCoarse, c.ground_mass_increase_coarse);
  put(out.metrics, kGroundNumberFine, c.ground_n_increase_fine);
  put(out.metrics, kGroundNumberCoarse, c.ground_n_increase_coarse);
  return out;
}

json replication_to_json(const ReplicationResult& r) {
  const env::BinGrid grid;
  json runs{{"humidifier_only", summary_to_json(r.humidifier_only_summary, grid)}};
  if (r.spray_clean_summary) runs["spray_clean_air"] = summary_to_json(*r.spray_clean_summary, grid);
  if (r.mitigated_summary) runs["humidifier_mask_on"] = summary_to_json(*r.mitigated_summary, grid);
  json metrics = json::object();
  for (const char* name : {kReductionRaw, kReductionCompensated, kGroundMassFine,
                           kGroundMassCoarse, kGroundNumberFine, kGroundNumberCoarse}) {
    const auto it = r.metrics.find(name);
    metrics[name] = it == r.metrics.end() ? json(nullptr) : json(it->second);
  }
  return json{
      {"schema_version", kSummarySchemaVersion},
      {"kind", "replication"},
      {"mask_enabled", r.mitigated.has_value()},
      {"calibration", calibration_to_json(r.calibration)},
      {"self_mist_signature", r.self_mist_signature},
      {"metrics", metrics},
      {"comparison", r.mitigated ? comparison_to_json(r.comparison) : json(nullptr)},
      {"runs", runs},
  };
}

Targets bench_targets() {
  return {
      {kReductionRaw, {20.0, 10.0}},
      {kReductionCompensated, {40.0, 10.0}},
      {kGroundMassFine, {63.0, 15.0}},
      {kGroundMassCoarse, {60.0, 15.0}},
      {kGroundNumberFine, {62.0, 15.0}},
      {kGroundNumberCoarse, {50.0, 15.0}},
  };
}

Targets targets_from_json(const json& j) {
  if (!j.is_object() || !j.contains("targets") || !j.at("targets").is_object()) {
    throw ConfigError("expected an object", "/targets");
  }
  const auto known = bench_targets();
  Targets out;
  for (const auto& [name, entry] : j.at("targets").items()) {
    const std::string path = "/targets/" + name;
    if (!known.contains(name)) throw ConfigError("unknown metric", path);
    if (!entry.is_object() || !entry.contains("value") || !entry.at("value").is_number()) {
      throw ConfigError("expected {\"value\": number, \"tolerance\": number}", path);
    }
    Target t;
    t.value = entry.at("value").get<double>();
    t.tolerance = entry.value("tolerance", known.at(name).tolerance);
    if (!(t.tolerance >= 0.0)) throw ConfigError("must be non-negative", path + "/tolerance");
    out[name] = t;
  }
  if (out.empty()) throw ConfigError("no targets given", "/targets");
  return out;
}

json targets_to_json(const Targets& targets) {
  json t = json::object();
  for (const auto& [name, target] : targets) {
    t[name] = {{"value", target.value}, {"tolerance", target.tolerance}};
  }
  return json{{"targets", t}};
}

Targets load_targets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open targets file " + path.string());
  try {
    return targets_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), path.string());
  }
}

std::vector<Residual> residuals(const ReplicationResult& result, const Targets& targets) {
  std::vector<Residual> out;
  for (const auto& [name, target] : targets) {
    Residual r{name, target.value, target.tolerance, std::nullopt, false};
    if (const auto it = result.metrics.find(name); it != result.metrics.end()) {
      r.value = it->second;
      r.within = std::abs(it->second - target.value) <= target.tolerance;
    }
    out.push_back(r);
  }
  return out;
}

double calibration_objective(const ReplicationResult& result, const Targets& targets) {
  double sum = 0.0;
  for (const auto& r : residuals(result, targets)) {
    const double scale = std::max(std::abs(r.target), 1.0);
    const double rel = r.value ? (*r.value - r.target) / scale : 1.0;
    sum += rel * rel;
    // Leaving the tolerance window costs extra so in-window fits win.
    if (r.value && r.tolerance > 0.0) {
      const double excess = std::abs(*r.value - r.target) - kWindowGuard * r.tolerance;
      if (excess > 0.0) sum += 1.0 + kWindowWeight * (excess / r.tolerance) * (excess / r.tolerance);
    }
  }
  const std::size_t sprays = result.mitigated_summary ? result.mitigated_summary->spray_count : 0;
  if (sprays != 1) sum += kSprayPenalty;
  return sum;
}

CalibrationReport calibrate(const Targets& targets, const CalibrationOptions& options) {
  CalibrationReport report;
  const auto& lo = options.bounds.lower;
  const auto& hi = options.bounds.upper;
  const auto evaluate = [&](const CalibrationParams& p) {
    ++report.evaluations;
    return calibration_objective(replicate_paper_experiment(p, true), targets);
  };

  using Member = double CalibrationParams::*;
  const std::array<Member, 4> members{&CalibrationParams::humidifier_rate,
                                      &CalibrationParams::local_fraction,
                                      &CalibrationParams::coalescence_rate,
                                      &CalibrationParams::push_away_rate};
  const auto clamp = [&](CalibrationParams p) {
    for (const Member m : members) p.*m = std::clamp(p.*m, lo.*m, hi.*m);
    return p;
  };

  CalibrationParams best = clamp(options.start.value_or(default_calibration()));
  double best_objective = evaluate(best);

  constexpr std::array<int, 4> kBases{2, 3, 5, 7};
  for (std::size_t k = 1; k <= options.global_samples; ++k) {
    CalibrationParams candidate;
    for (std::size_t d = 0; d < members.size(); ++d) {
      const double u = halton(k, kBases[d]);
      const Member m = members[d];
      candidate.*m = lo.*m * std::pow(hi.*m / lo.*m, u);
    }
    const double objective = evaluate(candidate);
    if (objective < best_objective) {
      best_objective = objective;
      best = candidate;
    }
  }
  log::info(fmt::format("calibrate: global phase objective {:.6g}", best_objective));

  const std::size_t points = std::max<std::size_t>(options.grid_points, 3);
  double span = 8.0;
  for (std::size_t sweep = 0; sweep < options.sweeps; ++sweep) {
    for (const Member m : members) {
      const double centre = best.*m;
      for (std::size_t j = 0; j < points; ++j) {
        const double exponent = 2.0 * static_cast<double>(j) / static_cast<double>(points - 1) - 1.0;
        CalibrationParams candidate = best;
        candidate.*m = centre * std::pow(span, exponent);
        candidate = clamp(candidate);
        if (candidate == best) continue;
        const double objective = evaluate(candidate);
        if (objective < best_objective) {
          best_objective = objective;
          best = candidate;
        }
      }
    }
    log::info(fmt::format("calibrate: sweep {} objective {:.6g}", sweep + 1, best_objective));
    span = std::sqrt(span);
  }

  const auto final_run = replicate_paper_experiment(best, true);
  report.params = best;
  report.objective = calibration_objective(final_run, targets);
  report.residuals = residuals(final_run, targets);
  report.mitigated_sprays = final_run.mitigated_summary ? final_run.mitigated_summary->spray_count : 0;
  report.within_tolerance =
      report.mitigated_sprays == 1 &&
      std::all_of(report.residuals.begin(), report.residuals.end(),
                  [](const Residual& r) { return r.within; });
  return report;
}

json calibration_report_to_json(const CalibrationReport& report) {
  json res = json::array();
  for (const auto& r : report.residuals) {
    res.push_back({{"metric", r.metric},
                   {"target", r.target},
                   {"tolerance", r.tolerance},
                   {"value", optional_json(r.value)},
                   {"within_tolerance", r.within}});
  }
  json out = calibration_to_json(report.params);
  out["schema_version"] = kConfigSchemaVersion;
  out["fit"] = {{"objective", report.objective},
                {"within_tolerance", report.within_tolerance},
                {"mitigated_sprays", report.mitigated_sprays},
                {"evaluations", report.evaluations},
                {"residuals", res}};
  return out;
}

}  // namespace smartmask::runner
