// smartmask command-line front end.
//
//   smartmask run --config scenario.json [--seed N] [--out DIR]
//   smartmask replicate --mask on|off [--calibration FILE] [--out DIR]
//   smartmask calibrate --targets targets.json [--out DIR]
//   smartmask serve --config scenario.json --port 7450 --gateway-port 7451
//
// Log level comes from SMARTMASK_LOG_LEVEL (trace, debug, info, warn, error, off).

#include <chrono>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <pthread.h>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "smartmask/errors.hpp"
#include "smartmask/logging.hpp"
#include "smartmask/replication.hpp"
#include "smartmask/report.hpp"
#include "smartmask/scenario.hpp"
#include "smartmask/server.hpp"

namespace fs = std::filesystem;
namespace sm = smartmask;
namespace runner = smartmask::runner;

namespace {

// Exit codes.
constexpr int kOk = 0;
constexpr int kConfigFailure = 2;
constexpr int kIoFailure = 3;
constexpr int kCalibrationFailed = 4;

int cmd_run(const fs::path& config, std::optional<std::uint64_t> seed, const fs::path& out) {
  auto cfg = runner::load_scenario(config);
  if (seed) cfg.seed = *seed;
  const auto started = std::chrono::steady_clock::now();
  const auto report = runner::run_scenario(cfg);
  runner::write_report(report, out);
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
  sm::log::info(fmt::format("run: {} rows, {} sprays, {:.2f} s; wrote {}", report.summary.rows,
                            report.summary.spray_count, elapsed.count(), out.string()));
  return kOk;
}

int cmd_replicate(bool mask_on, const std::optional<fs::path>& calibration, const fs::path& out) {
  const auto params =
      calibration ? runner::load_calibration(*calibration) : runner::default_calibration();
  const auto started = std::chrono::steady_clock::now();
  const auto result = runner::replicate_paper_experiment(params, mask_on);
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;

  fs::create_directories(out);
  runner::write_file_atomic(out / "summary.json", runner::replication_to_json(result).dump(2) + "\n");
  runner::write_file_atomic(out / "timeseries_humidifier_only.csv",
                            runner::timeseries_csv(result.humidifier_only));
  if (result.spray_clean) {
    runner::write_file_atomic(out / "timeseries_spray_clean.csv",
                              runner::timeseries_csv(*result.spray_clean));
  }
  const auto& primary = result.mitigated ? *result.mitigated : result.humidifier_only;
  runner::write_file_atomic(out / "timeseries.csv", runner::timeseries_csv(primary));

  for (const auto& [name, value] : result.metrics) std::cout << fmt::format("{:<36} {:8.2f}\n", name, value);
  sm::log::info(fmt::format("replicate: {:.2f} s; wrote {}", elapsed.count(), out.string()));
  return kOk;
}

int cmd_calibrate(const fs::path& targets_file, const fs::path& out, std::size_t samples,
                  std::size_t sweeps) {
  const auto targets = runner::load_targets(targets_file);
  runner::CalibrationOptions options;
  options.global_samples = samples;
  options.sweeps = sweeps;
  options.start = runner::default_calibration();
  const auto report = runner::calibrate(targets, options);

  fs::create_directories(out);
  runner::write_file_atomic(out / "calibration.json",
                            runner::calibration_report_to_json(report).dump(2) + "\n");
  for (const auto& r : report.residuals) {
    std::cout << fmt::format("{:<36} target {:6.1f} +/- {:4.1f}  got {:>8}  {}\n", r.metric, r.target,
                             r.tolerance, r.value ? fmt::format("{:.2f}", *r.value) : "n/a",
                             r.within ? "ok" : "OUT");
  }
  if (!report.within_tolerance) {
    sm::log::error(fmt::format("calibration failed: best objective {:.4g} leaves residuals outside "
                               "tolerance ({} sprays in the mitigated run)",
                               report.objective, report.mitigated_sprays));
    return kCalibrationFailed;
  }
  sm::log::info(fmt::format("calibrate: objective {:.4g} after {} evaluations", report.objective,
                            report.evaluations));
  return kOk;
}

int cmd_serve(const fs::path& config, sm::server::ServeOptions options,
              const std::optional<std::string>& key_hex) {
  const auto cfg = runner::load_scenario(config);
  if (key_hex) {
    try {
      options.key = sm::protocol::SessionKey::from_hex(*key_hex).key();
    } catch (const std::invalid_argument& e) {
      throw sm::ConfigError(e.what(), "--key-hex");
    }
  }

  // Block the signals before any thread starts so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  sm::server::DeviceServer server(cfg, options);
  server.start();
  std::cout << fmt::format("device port {} gateway port {}\n", server.device_port(),
                           server.gateway_port())
            << std::flush;
  int received = 0;
  sigwait(&signals, &received);
  sm::log::info(fmt::format("signal {} received, stopping after {} ticks", received, server.ticks()));
  server.stop();
  server.wait();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  sm::log::init_from_env();

  CLI::App app{"Smart mask digital twin"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a scenario and write timeseries.csv and summary.json");
  fs::path run_config;
  std::optional<std::uint64_t> run_seed;
  fs::path run_out = "out";
  run->add_option("--config", run_config, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", run_seed, "Override the scenario seed");
  run->add_option("--out", run_out, "Output directory")->capture_default_str();

  auto* replicate = app.add_subcommand("replicate", "Run the three-part bench experiment");
  std::string mask = "on";
  std::optional<fs::path> replicate_cal;
  fs::path replicate_out = "out";
  replicate->add_option("--mask", mask, "on runs (a), (b) and (c); off runs (a) only")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  replicate->add_option("--calibration", replicate_cal, "Calibration JSON (default: built-in)")
      ->check(CLI::ExistingFile);
  replicate->add_option("--out", replicate_out, "Output directory")->capture_default_str();

  auto* calibrate = app.add_subcommand("calibrate", "Fit the calibration parameters to targets");
  fs::path targets_file;
  fs::path calibrate_out = ".";
  std::size_t samples = runner::CalibrationOptions{}.global_samples;
  std::size_t sweeps = runner::CalibrationOptions{}.sweeps;
  calibrate->add_option("--targets", targets_file, "Targets JSON file")->required()->check(CLI::ExistingFile);
  calibrate->add_option("--out", calibrate_out, "Directory for calibration.json")->capture_default_str();
  calibrate->add_option("--samples", samples, "Global search samples")->capture_default_str();
  calibrate->add_option("--sweeps", sweeps, "Local refinement sweeps")->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Run the device service in real time");
  fs::path serve_config;
  sm::server::ServeOptions serve_options;
  std::optional<std::string> key_hex;
  serve->add_option("--config", serve_config, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", serve_options.device_port, "Binary protocol port")->capture_default_str();
  serve->add_option("--gateway-port", serve_options.gateway_port, "WebSocket gateway port")
      ->capture_default_str();
  serve->add_option("--bind", serve_options.bind_address, "Listen address")->capture_default_str();
  serve->add_option("--speed", serve_options.speed, "Simulated seconds per second")
      ->check(CLI::Range(1e-3, 1000.0))
      ->capture_default_str();
  serve->add_option("--key-hex", key_hex, "Pre-shared key, 64 hex characters");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_config, run_seed, run_out);
    if (*replicate) return cmd_replicate(mask == "on", replicate_cal, replicate_out);
    if (*calibrate) return cmd_calibrate(targets_file, calibrate_out, samples, sweeps);
    if (*serve) return cmd_serve(serve_config, serve_options, key_hex);
  } catch (const sm::ConfigError& e) {
    sm::log::error(fmt::format("config error: {}", e.what()));
    return kConfigFailure;
  } catch (const sm::IoError& e) {
    sm::log::error(fmt::format("I/O error: {}", e.what()));
    return kIoFailure;
  } catch (const fs::filesystem_error& e) {
    sm::log::error(fmt::format("I/O error: {}", e.what()));
    return kIoFailure;
  }
  return kOk;
}
