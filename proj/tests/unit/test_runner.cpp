#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "smartmask/errors.hpp"
#include "smartmask/replication.hpp"
#include "smartmask/report.hpp"
#include "smartmask/simulation.hpp"

namespace smartmask::runner {
namespace {

ScenarioConfig short_config(double duration = 30.0) {
  ScenarioConfig cfg = bench_replication_config(default_calibration());
  cfg.duration = duration;
  return cfg;
}

std::size_t count_lines(const std::string& csv) {
  return static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
}

TEST(CoSimulation, OneRecordPerTickInclusive) {
  const auto cfg = short_config(20.0);
  const auto result = simulate(cfg);
  ASSERT_EQ(result.records.size(), 21u);
  EXPECT_EQ(result.records.front().time, 0.0);
  EXPECT_DOUBLE_EQ(result.records.back().time, 20.0);
  const auto csv = timeseries_csv(result);
  EXPECT_EQ(count_lines(csv), 22u);  // header + rows
  EXPECT_NE(csv.find("\r\n"), std::string::npos);
}

TEST(CoSimulation, FinishedAfterLastRecord) {
  CoSimulation sim(short_config(3.0));
  std::size_t n = 0;
  while (!sim.finished()) {
    sim.advance();
    ++n;
  }
  EXPECT_EQ(n, 4u);
}

TEST(CoSimulation, DeterministicBytes) {
  const auto cfg = short_config(40.0);
  EXPECT_EQ(timeseries_csv(simulate(cfg)), timeseries_csv(simulate(cfg)));
  auto other = cfg;
  other.seed += 1;
  EXPECT_NE(timeseries_csv(simulate(cfg)), timeseries_csv(simulate(other)));
}

TEST(CoSimulation, ZeroEmissionGivesNullReductions) {
  ScenarioConfig cfg;
  cfg.duration = 20.0;
  cfg.calibration = default_calibration();
  const auto report = run_scenario(cfg);
  EXPECT_EQ(report.summary.spray_count, 0u);
  EXPECT_FALSE(report.comparison.reduction_pct_raw.has_value());
  const auto j = report_to_json(report);
  EXPECT_TRUE(j.at("metrics").at("reduction_pct_raw").is_null());
}

TEST(CoSimulation, BenchScenarioSpraysExactlyOnce) {
  const auto result = simulate(bench_replication_config(default_calibration()));
  const auto summary = summarize(result);
  EXPECT_EQ(summary.spray_count, 1u);
  EXPECT_EQ(summary.autonomous_spray_count, 1u);
}

TEST(CoSimulation, AutonomousSpraysFollowHighRisk) {
  auto cfg = short_config(175.0);
  for (int k = 0; k < 4; ++k) {
    cfg.events.push_back({40.0 * k, env::default_event(env::EmissionKind::sneeze)});
  }
  const auto result = simulate(cfg);
  std::size_t autonomous = 0;
  for (const auto& r : result.records) {
    if (r.spray_start != SprayStart::autonomous) continue;
    ++autonomous;
    EXPECT_GE(static_cast<int>(r.risk), static_cast<int>(controller::RiskLevel::high)) << r.time;
    EXPECT_EQ(r.mode, controller::Mode::automatic);
  }
  EXPECT_GE(autonomous, 1u);
}

TEST(CoSimulation, ManualModeHasNoAutonomousSprays) {
  auto cfg = short_config(60.0);
  cfg.initial_mode = controller::Mode::manual;
  for (const auto& r : simulate(cfg).records) EXPECT_NE(r.spray_start, SprayStart::autonomous);
}

TEST(CoSimulation, ScriptedCommandsAcked) {
  auto cfg = short_config(10.0);
  cfg.commands.push_back({2.0, protocol::make_set_mode(1)});
  cfg.commands.push_back({3.0, protocol::make_spray_on()});
  const auto result = simulate(cfg);
  ASSERT_EQ(result.records[2].acks.size(), 1u);
  EXPECT_EQ(result.records[2].acks[0].ack.status, 0);
  EXPECT_EQ(result.records[2].mode, controller::Mode::manual);
  EXPECT_EQ(result.records[3].spray_start, SprayStart::manual);
  EXPECT_TRUE(result.records[3].spraying);
}

TEST(CoSimulation, QueuedCommandRoutedToOrigin) {
  CoSimulation sim(short_config(5.0));
  sim.advance();
  sim.enqueue({17, 99, protocol::make_set_mode(1)});
  const auto r = sim.advance();
  ASSERT_EQ(r.acks.size(), 1u);
  EXPECT_EQ(r.acks[0].origin, 17u);
  EXPECT_EQ(r.acks[0].ack.seq, 99);
}

TEST(CoSimulation, InjectRaisesConcentration) {
  ScenarioConfig cfg;
  cfg.calibration = default_calibration();
  CoSimulation sim(cfg, true);
  sim.advance();
  sim.inject(env::default_event(env::EmissionKind::sneeze));
  sim.advance();
  const auto after = sim.advance();
  double total = 0.0;
  for (double v : sim.environment().breathing.number) total += v;
  EXPECT_GT(total, 0.0);
  EXPECT_GT(after.mask.number[3] + after.mask.number[4], 0.0);
}

TEST(Replication, LocalFractionIncreasesRawReduction) {
  auto low = default_calibration();
  auto high = low;
  high.local_fraction *= 2.0;
  const auto a = replicate_paper_experiment(low).metrics.at(kReductionRaw);
  const auto b = replicate_paper_experiment(high).metrics.at(kReductionRaw);
  EXPECT_GT(b, a);
}

TEST(Replication, MetricsWithinTargets) {
  const auto start = std::chrono::steady_clock::now();
  const auto result = replicate_paper_experiment(default_calibration());
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 10.0);
  for (const auto& r : residuals(result, bench_targets())) {
    ASSERT_TRUE(r.value) << r.metric;
    EXPECT_TRUE(r.within) << r.metric << " = " << *r.value;
  }
}

TEST(Replication, MaskOffRunsOnlyBaseline) {
  const auto result = replicate_paper_experiment(default_calibration(), false);
  EXPECT_FALSE(result.mitigated);
  EXPECT_FALSE(result.spray_clean);
  EXPECT_TRUE(result.metrics.empty());
  EXPECT_EQ(result.humidifier_only_summary.spray_count, 0u);
}

TEST(Replication, SignatureIsMeanOfLastSprayTicks) {
  RunResult run;
  for (int i = 0; i < 6; ++i) {
    TickRecord r;
    r.spraying = i >= 1 && i <= 4;
    r.spray_intensity = r.spraying ? 0.5 : 0.0;
    r.mask.number.assign(5, static_cast<double>(i));
    run.records.push_back(r);
  }
  const auto sig = measure_signature(run, 3);
  ASSERT_EQ(sig.size(), 5u);
  // Ticks 2..4, normalised to full intensity.
  EXPECT_DOUBLE_EQ(sig[0], 6.0);
}

TEST(Calibration, ObjectiveZeroAtExactTargets) {
  const auto result = replicate_paper_experiment(default_calibration());
  Targets exact;
  for (const auto& [name, value] : result.metrics) exact[name] = {value, 10.0};
  EXPECT_NEAR(calibration_objective(result, exact), 0.0, 1e-12);
  Targets off = exact;
  off.begin()->second.value += 100.0;
  EXPECT_GT(calibration_objective(result, off), 1.0);
}

TEST(Calibration, TargetsJsonRoundTrip) {
  const auto t = bench_targets();
  const auto back = targets_from_json(targets_to_json(t));
  ASSERT_EQ(back.size(), t.size());
  for (const auto& [k, v] : t) {
    EXPECT_EQ(back.at(k).value, v.value);
    EXPECT_EQ(back.at(k).tolerance, v.tolerance);
  }
  EXPECT_EQ(targets_from_json(nlohmann::json::parse(
                std::ifstream(std::filesystem::path(SMARTMASK_SOURCE_DIR) / "config/targets.json")))
                .size(),
            6u);
}

TEST(Report, WritesFilesAndRejectsBadDirectory) {
  const auto report = run_scenario(short_config(10.0));
  const auto dir = std::filesystem::temp_directory_path() / "smartmask_report_test";
  std::filesystem::remove_all(dir);
  write_report(report, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "timeseries.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "summary.json"));
  const auto summary = nlohmann::json::parse(std::ifstream(dir / "summary.json"));
  EXPECT_EQ(summary.at("schema_version"), kSummarySchemaVersion);

  std::ofstream(dir / "blocker") << "x";
  EXPECT_THROW(write_report(report, dir / "blocker" / "sub"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Report, RangeSumAndLabels) {
  const env::BinGrid grid;
  EXPECT_EQ(bin_label(grid, 0), "0p3_0p5");
  EXPECT_EQ(range_sum({1, 2, 4, 8, 16}, grid, 0.3, 1.0), 3.0);
  EXPECT_EQ(range_sum({1, 2, 4, 8, 16}, grid, 1.0, 2.5), 4.0);
  EXPECT_EQ(column_names(grid).front(), "time_s");
}

TEST(Report, CompareComputesPercentChange) {
  RunSummary base, mit;
  base.avg_mask_n_fine = 200.0;
  mit.avg_mask_n_fine = 150.0;
  base.avg_mask_n_fine_compensated = 200.0;
  mit.avg_mask_n_fine_compensated = 100.0;
  base.avg_ground_mass_by_bin = {1, 1, 2, 0, 0};
  mit.avg_ground_mass_by_bin = {1.5, 1.5, 3, 0, 0};
  base.avg_ground_n_by_bin = base.avg_ground_mass_by_bin;
  mit.avg_ground_n_by_bin = mit.avg_ground_mass_by_bin;
  const auto c = compare(base, mit, env::BinGrid{});
  EXPECT_DOUBLE_EQ(*c.reduction_pct_raw, 25.0);
  EXPECT_DOUBLE_EQ(*c.reduction_pct_compensated, 50.0);
  EXPECT_DOUBLE_EQ(*c.ground_mass_increase_fine, 50.0);
  EXPECT_FALSE(c.ground_mass_increase_by_bin[4].has_value());
}

}  // namespace
}  // namespace smartmask::runner
