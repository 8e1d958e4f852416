#include "smartmask/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "smartmask/errors.hpp"

namespace smartmask::runner {

namespace {

using nlohmann::json;

// Reads optional fields from one JSON object and rejects unknown keys, so a
// misspelt field surfaces as an error with its path instead of a silent default.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("expected an object", path_.empty() ? "/" : path_);
  }

  std::string field(std::string_view key) const { return path_ + "/" + std::string(key); }

  bool has(const char* key) const { return j_.contains(key); }

  const json& at(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void number(const char* key, double& out) {
    if (!j_.contains(key)) return;
    const json& v = at(key);
    if (!v.is_number()) throw ConfigError("expected a number", field(key));
    out = v.get<double>();
    if (!std::isfinite(out)) throw ConfigError("must be finite", field(key));
  }

  void unsigned_integer(const char* key, std::uint64_t& out) {
    if (!j_.contains(key)) return;
    const json& v = at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError("expected a non-negative integer", field(key));
    }
    out = v.get<std::uint64_t>();
  }

  void boolean(const char* key, bool& out) {
    if (!j_.contains(key)) return;
    const json& v = at(key);
    if (!v.is_boolean()) throw ConfigError("expected a boolean", field(key));
    out = v.get<bool>();
  }

  void string(const char* key, std::string& out) {
    if (!j_.contains(key)) return;
    const json& v = at(key);
    if (!v.is_string()) throw ConfigError("expected a string", field(key));
    out = v.get<std::string>();
  }

  void numbers(const char* key, std::vector<double>& out) {
    if (!j_.contains(key)) return;
    const json& v = at(key);
    if (!v.is_array()) throw ConfigError("expected an array of numbers", field(key));
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) {
        throw ConfigError("expected a number", field(key) + "/" + std::to_string(i));
      }
      out.push_back(v[i].get<double>());
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown field", field(key));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

controller::Mode parse_mode(const std::string& name, const std::string& field) {
  if (name == "automatic") return controller::Mode::automatic;
  if (name == "manual") return controller::Mode::manual;
  throw ConfigError("expected 'automatic' or 'manual'", field);
}

protocol::AlertCode parse_alert(const std::string& name, const std::string& field) {
  if (name == "recharge") return protocol::AlertCode::recharge;
  if (name == "refill") return protocol::AlertCode::refill;
  if (name == "decontaminate") return protocol::AlertCode::decontaminate;
  throw ConfigError("expected 'recharge', 'refill' or 'decontaminate'", field);
}

ScheduledEvent parse_event(const json& j, const std::string& path,
                           const CalibrationParams& calibration) {
  ObjectReader r(j, path);
  std::string kind_name;
  r.string("kind", kind_name);
  if (kind_name.empty()) throw ConfigError("missing event kind", r.field("kind"));
  env::EmissionKind kind;
  try {
    kind = env::emission_kind_from_string(kind_name);
  } catch (const ConfigError& e) {
    throw ConfigError(e.what(), r.field("kind"));
  }
  ScheduledEvent out;
  out.event = env::default_event(kind, calibration.humidifier_rate);
  r.number("start", out.start);
  r.number("total_count", out.event.total_count);
  r.number("median_diameter", out.event.median_diameter);
  r.number("geometric_std_dev", out.event.geometric_std_dev);
  r.number("duration", out.event.duration);
  r.number("nucleus_diameter", out.event.nucleus_diameter);
  r.number("min_diameter", out.event.min_diameter);
  r.number("max_diameter", out.event.max_diameter);
  r.finish();
  if (out.start < 0.0) throw ConfigError("must be non-negative", r.field("start"));
  if (out.event.total_count < 0.0) throw ConfigError("must be non-negative", r.field("total_count"));
  if (out.event.duration < 0.0) throw ConfigError("must be non-negative", r.field("duration"));
  if (!(out.event.geometric_std_dev > 1.0)) {
    throw ConfigError("must exceed 1", r.field("geometric_std_dev"));
  }
  if (!(out.event.median_diameter > 0.0)) {
    throw ConfigError("must be positive", r.field("median_diameter"));
  }
  return out;
}

ScheduledCommand parse_command(const json& j, const std::string& path, bool timed) {
  ObjectReader r(j, path);
  ScheduledCommand out;
  if (timed) r.number("time", out.time);
  std::string name;
  r.string("command", name);
  if (name == "set_mode") {
    std::string mode = "manual";
    r.string("mode", mode);
    out.command = protocol::make_set_mode(
        static_cast<std::uint8_t>(parse_mode(mode, r.field("mode"))));
  } else if (name == "spray_on") {
    protocol::SprayOnArgs args;
    double intensity = 0.0, duration = 0.0, angle = 0.0;
    r.number("intensity", intensity);
    r.number("duration", duration);
    r.number("angle_factor", angle);
    args.intensity = static_cast<float>(intensity);
    args.duration = static_cast<float>(duration);
    args.angle_factor = static_cast<float>(angle);
    out.command = protocol::make_spray_on(args);
  } else if (name == "spray_off") {
    out.command = protocol::make_spray_off();
  } else if (name == "ack_alert") {
    std::string alert;
    r.string("alert", alert);
    out.command = protocol::make_ack_alert(parse_alert(alert, r.field("alert")));
  } else if (name == "set_params") {
    protocol::SetParamsArgs args;
    double duration = args.spray_duration, high = args.intensity_high,
           very_high = args.intensity_very_high, cooldown = args.cooldown;
    r.number("spray_duration", duration);
    r.number("intensity_high", high);
    r.number("intensity_very_high", very_high);
    r.number("cooldown", cooldown);
    args = {static_cast<float>(duration), static_cast<float>(high),
            static_cast<float>(very_high), static_cast<float>(cooldown)};
    out.command = protocol::make_set_params(args);
  } else {
    throw ConfigError("unknown command '" + name + "'", r.field("command"));
  }
  r.finish();
  if (out.time < 0.0) throw ConfigError("must be non-negative", r.field("time"));
  return out;
}

json command_body_to_json(const protocol::Command& command) {
  json j = json::object();
  const protocol::Command& c = command;
  switch (static_cast<protocol::CommandCode>(c.code)) {
    case protocol::CommandCode::set_mode: {
      const auto mode = protocol::parse_set_mode(c).value_or(0);
      j["command"] = "set_mode";
      j["mode"] = mode == 1 ? "manual" : "automatic";
      break;
    }
    case protocol::CommandCode::spray_on: {
      const auto a = protocol::parse_spray_on(c).value_or(protocol::SprayOnArgs{});
      j["command"] = "spray_on";
      j["intensity"] = a.intensity;
      j["duration"] = a.duration;
      j["angle_factor"] = a.angle_factor;
      break;
    }
    case protocol::CommandCode::spray_off:
      j["command"] = "spray_off";
      break;
    case protocol::CommandCode::ack_alert: {
      const auto a = protocol::parse_ack_alert(c);
      j["command"] = "ack_alert";
      j["alert"] = a ? std::string(controller::to_string(*a)) : "recharge";
      break;
    }
    case protocol::CommandCode::set_params: {
      const auto a = protocol::parse_set_params(c).value_or(protocol::SetParamsArgs{});
      j["command"] = "set_params";
      j["spray_duration"] = a.spray_duration;
      j["intensity_high"] = a.intensity_high;
      j["intensity_very_high"] = a.intensity_very_high;
      j["cooldown"] = a.cooldown;
      break;
    }
  }
  if (!j.contains("command")) {
    j["command"] = "unknown";
    j["code"] = c.code;
  }
  return j;
}

}  // namespace

protocol::Command command_from_json(const json& j, const std::string& path) {
  return parse_command(j, path, false).command;
}

json command_to_json(const protocol::Command& command) { return command_body_to_json(command); }

std::size_t ScenarioConfig::control_ticks() const {
  return static_cast<std::size_t>(std::llround(duration / control_dt));
}

std::size_t ScenarioConfig::physics_steps_per_tick() const {
  return static_cast<std::size_t>(std::llround(control_dt / physics_dt));
}

void validate(const ScenarioConfig& cfg) {
  if (!(cfg.duration > 0.0)) throw ConfigError("must be positive", "/duration");
  if (!(cfg.physics_dt > 0.0) || cfg.physics_dt > env::kMaxStep) {
    throw ConfigError("must lie in (0, 0.5]", "/physics_dt");
  }
  if (!(cfg.control_dt > 0.0)) throw ConfigError("must be positive", "/control_dt");
  const double ratio = cfg.control_dt / cfg.physics_dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
    throw ConfigError("must be an integer multiple of physics_dt", "/control_dt");
  }
  const double ticks = cfg.duration / cfg.control_dt;
  if (std::abs(ticks - std::round(ticks)) > 1e-9 * ticks) {
    throw ConfigError("must be an integer multiple of control_dt", "/duration");
  }
  if (!(cfg.sample_period > 0.0)) throw ConfigError("must be positive", "/sensors/sample_period");
  if (!(cfg.mask_noise_sigma >= 0.0)) {
    throw ConfigError("must be non-negative", "/sensors/mask_noise_sigma");
  }
  if (!(cfg.ground_noise_sigma >= 0.0)) {
    throw ConfigError("must be non-negative", "/sensors/ground_noise_sigma");
  }
  const env::BinGrid grid;
  if (!cfg.background.empty() && cfg.background.size() != grid.size()) {
    throw ConfigError("expected one value per bin", "/background");
  }
  for (double b : cfg.background) {
    if (!(b >= 0.0)) throw ConfigError("must be non-negative", "/background");
  }
  if (!cfg.controller.self_mist_signature.empty() &&
      cfg.controller.self_mist_signature.size() != grid.size()) {
    throw ConfigError("expected one value per bin", "/controller/self_mist_signature");
  }
  const auto& c = cfg.calibration;
  if (!(c.local_fraction >= 0.0)) throw ConfigError("must be non-negative", "/calibration/local_fraction");
  if (!(c.coalescence_rate >= 0.0)) {
    throw ConfigError("must be non-negative", "/calibration/coalescence_rate");
  }
  if (!(c.push_away_rate >= 0.0)) throw ConfigError("must be non-negative", "/calibration/push_away_rate");
  if (!(c.humidifier_rate >= 0.0)) {
    throw ConfigError("must be non-negative", "/calibration/humidifier_rate");
  }
  try {
    controller::validate(cfg.controller);
    mitigation::validate(cfg.mitigation);
  } catch (const ConfigError& e) {
    // Component validators report dotted names; re-anchor them as paths.
    std::string field = e.field();
    for (char& ch : field) {
      if (ch == '.') ch = '/';
    }
    throw ConfigError(std::string(e.what()).substr(e.field().size() + 2), "/" + field);
  }
}

env::EnvParams effective_env_params(const ScenarioConfig& cfg) {
  env::EnvParams p = cfg.env_params;
  p.coalescence_rate = cfg.calibration.coalescence_rate;
  return p;
}

mitigation::MitigationConfig effective_mitigation(const ScenarioConfig& cfg) {
  mitigation::MitigationConfig m = cfg.mitigation;
  m.local_fraction = cfg.calibration.local_fraction;
  m.push_away_rate = cfg.calibration.push_away_rate;
  return m;
}

CalibrationParams calibration_from_json(const json& j) {
  ObjectReader r(j, "/calibration");
  CalibrationParams p;
  r.number("local_fraction", p.local_fraction);
  r.number("coalescence_rate", p.coalescence_rate);
  r.number("push_away_rate", p.push_away_rate);
  r.number("humidifier_rate", p.humidifier_rate);
  // calibrate writes its fit diagnostics alongside the parameters.
  if (r.has("fit")) r.at("fit");
  if (r.has("schema_version")) r.at("schema_version");
  r.finish();
  return p;
}

json calibration_to_json(const CalibrationParams& p) {
  return json{{"local_fraction", p.local_fraction},
              {"coalescence_rate", p.coalescence_rate},
              {"push_away_rate", p.push_away_rate},
              {"humidifier_rate", p.humidifier_rate}};
}

CalibrationParams load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calibration file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), path.string());
  }
  return calibration_from_json(j);
}

ScenarioConfig scenario_from_json(const json& j) {
  ObjectReader root(j, "");
  ScenarioConfig cfg;

  std::uint64_t version = kConfigSchemaVersion;
  root.unsigned_integer("schema_version", version);
  if (version != kConfigSchemaVersion) {
    throw ConfigError("unsupported schema version", "/schema_version");
  }
  root.number("duration", cfg.duration);
  root.number("physics_dt", cfg.physics_dt);
  root.number("control_dt", cfg.control_dt);
  root.unsigned_integer("seed", cfg.seed);
  root.boolean("mask_enabled", cfg.mask_enabled);
  root.numbers("background", cfg.background);
  std::string output_dir;
  root.string("output_dir", output_dir);
  if (!output_dir.empty()) cfg.output_dir = output_dir;

  if (root.has("calibration")) cfg.calibration = calibration_from_json(root.at("calibration"));

  if (root.has("geometry")) {
    ObjectReader r(root.at("geometry"), "/geometry");
    r.number("breathing_height_m", cfg.geometry.breathing_height_m);
    r.number("ground_height_m", cfg.geometry.ground_height_m);
    r.number("cross_section_m2", cfg.geometry.cross_section_m2);
    r.number("temperature_c", cfg.geometry.temperature_c);
    r.number("relative_humidity", cfg.geometry.relative_humidity);
    r.finish();
  }
  if (root.has("environment")) {
    ObjectReader r(root.at("environment"), "/environment");
    r.number("evaporation_constant", cfg.env_params.evaporation_constant);
    r.number("droplet_density", cfg.env_params.droplet_density);
    r.number("gravity", cfg.env_params.gravity);
    r.number("mist_gsd", cfg.env_params.mist_gsd);
    r.number("mist_partner_lifetime", cfg.env_params.mist_partner_lifetime);
    r.finish();
  }
  if (root.has("controller")) {
    ObjectReader r(root.at("controller"), "/controller");
    auto& c = cfg.controller;
    std::vector<double> thresholds(c.risk_thresholds.begin(), c.risk_thresholds.end());
    r.numbers("risk_thresholds", thresholds);
    if (thresholds.size() != 3) throw ConfigError("expected three values", r.field("risk_thresholds"));
    std::copy(thresholds.begin(), thresholds.end(), c.risk_thresholds.begin());
    r.number("spray_duration", c.spray_duration);
    r.number("intensity_high", c.intensity_high);
    r.number("intensity_very_high", c.intensity_very_high);
    r.number("angle_factor", c.angle_factor);
    r.number("cooldown", c.cooldown);
    r.number("battery_alert_pct", c.battery_alert_pct);
    r.number("liquid_alert_pct", c.liquid_alert_pct);
    r.number("decontamination_threshold", c.decontamination_threshold);
    r.numbers("self_mist_signature", c.self_mist_signature);
    std::string mode = std::string(controller::to_string(cfg.initial_mode));
    r.string("initial_mode", mode);
    cfg.initial_mode = parse_mode(mode, r.field("initial_mode"));
    r.finish();
  }
  if (root.has("mitigation")) {
    ObjectReader r(root.at("mitigation"), "/mitigation");
    auto& m = cfg.mitigation;
    r.number("liquid_rate_ml_per_min", m.liquid_rate_ml_per_min);
    r.number("reservoir_ml", m.reservoir_ml);
    r.number("battery_capacity_mah", m.battery_capacity_mah);
    r.number("idle_current_ma", m.idle_current_ma);
    r.number("spray_current_ma", m.spray_current_ma);
    r.number("mist_diameter_um", m.mist_diameter_um);
    r.finish();
  }
  if (root.has("sensors")) {
    ObjectReader r(root.at("sensors"), "/sensors");
    r.number("mask_noise_sigma", cfg.mask_noise_sigma);
    r.number("ground_noise_sigma", cfg.ground_noise_sigma);
    r.number("sample_period", cfg.sample_period);
    r.finish();
  }
  if (root.has("events")) {
    const json& events = root.at("events");
    if (!events.is_array()) throw ConfigError("expected an array", "/events");
    for (std::size_t i = 0; i < events.size(); ++i) {
      cfg.events.push_back(parse_event(events[i], "/events/" + std::to_string(i), cfg.calibration));
    }
  }
  if (root.has("commands")) {
    const json& commands = root.at("commands");
    if (!commands.is_array()) throw ConfigError("expected an array", "/commands");
    for (std::size_t i = 0; i < commands.size(); ++i) {
      cfg.commands.push_back(parse_command(commands[i], "/commands/" + std::to_string(i), true));
    }
  }
  root.finish();
  validate(cfg);
  return cfg;
}

json scenario_to_json(const ScenarioConfig& cfg) {
  json events = json::array();
  for (const auto& e : cfg.events) {
    events.push_back({{"kind", std::string(env::to_string(e.event.kind))},
                      {"start", e.start},
                      {"total_count", e.event.total_count},
                      {"median_diameter", e.event.median_diameter},
                      {"geometric_std_dev", e.event.geometric_std_dev},
                      {"duration", e.event.duration},
                      {"nucleus_diameter", e.event.nucleus_diameter},
                      {"min_diameter", e.event.min_diameter},
                      {"max_diameter", e.event.max_diameter}});
  }
  json commands = json::array();
  for (const auto& c : cfg.commands) {
    json entry = command_body_to_json(c.command);
    entry["time"] = c.time;
    commands.push_back(entry);
  }
  const auto& c = cfg.controller;
  const auto& m = cfg.mitigation;
  return json{
      {"schema_version", kConfigSchemaVersion},
      {"duration", cfg.duration},
      {"physics_dt", cfg.physics_dt},
      {"control_dt", cfg.control_dt},
      {"seed", cfg.seed},
      {"mask_enabled", cfg.mask_enabled},
      {"background", cfg.background},
      {"output_dir", cfg.output_dir.string()},
      {"calibration", calibration_to_json(cfg.calibration)},
      {"geometry",
       {{"breathing_height_m", cfg.geometry.breathing_height_m},
        {"ground_height_m", cfg.geometry.ground_height_m},
        {"cross_section_m2", cfg.geometry.cross_section_m2},
        {"temperature_c", cfg.geometry.temperature_c},
        {"relative_humidity", cfg.geometry.relative_humidity}}},
      {"environment",
       {{"evaporation_constant", cfg.env_params.evaporation_constant},
        {"droplet_density", cfg.env_params.droplet_density},
        {"gravity", cfg.env_params.gravity},
        {"mist_gsd", cfg.env_params.mist_gsd},
        {"mist_partner_lifetime", cfg.env_params.mist_partner_lifetime}}},
      {"controller",
       {{"risk_thresholds", c.risk_thresholds},
        {"spray_duration", c.spray_duration},
        {"intensity_high", c.intensity_high},
        {"intensity_very_high", c.intensity_very_high},
        {"angle_factor", c.angle_factor},
        {"cooldown", c.cooldown},
        {"battery_alert_pct", c.battery_alert_pct},
        {"liquid_alert_pct", c.liquid_alert_pct},
        {"decontamination_threshold", c.decontamination_threshold},
        {"self_mist_signature", c.self_mist_signature},
        {"initial_mode", std::string(controller::to_string(cfg.initial_mode))}}},
      {"mitigation",
       {{"liquid_rate_ml_per_min", m.liquid_rate_ml_per_min},
        {"reservoir_ml", m.reservoir_ml},
        {"battery_capacity_mah", m.battery_capacity_mah},
        {"idle_current_ma", m.idle_current_ma},
        {"spray_current_ma", m.spray_current_ma},
        {"mist_diameter_um", m.mist_diameter_um}}},
      {"sensors",
       {{"mask_noise_sigma", cfg.mask_noise_sigma},
        {"ground_noise_sigma", cfg.ground_noise_sigma},
        {"sample_period", cfg.sample_period}}},
      {"events", events},
      {"commands", commands},
  };
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), path.string());
  }
  // A calibration file may be referenced instead of inlined.
  if (j.is_object() && j.contains("calibration_file")) {
    const auto file = path.parent_path() / j.at("calibration_file").get<std::string>();
    j["calibration"] = calibration_to_json(load_calibration(file));
    j.erase("calibration_file");
  }
  return scenario_from_json(j);
}

CalibrationParams default_calibration() {
  CalibrationParams p;
  p.local_fraction = 0.125;
  p.coalescence_rate = 0.002401;
  p.push_away_rate = 0.013958498978115299;
  p.humidifier_rate = 1.9122e8;
  return p;
}

ScenarioConfig bench_replication_config(const CalibrationParams& calibration) {
  ScenarioConfig cfg;
  cfg.duration = 175.0;
  cfg.seed = 20201;
  cfg.calibration = calibration;
  ScheduledEvent humidifier;
  humidifier.start = 0.0;
  humidifier.event = env::default_event(env::EmissionKind::humidifier, calibration.humidifier_rate);
  cfg.events.push_back(humidifier);
  return cfg;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into place: " + path.string());
  }
}

}  // namespace smartmask::runner
