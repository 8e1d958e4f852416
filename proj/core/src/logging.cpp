#include "smartmask/logging.hpp"

#include <cstdlib>
#include <cctype>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace smartmask::log {

namespace {

// Logs go to stderr so CLI output on stdout stays machine-readable.
spdlog::logger& logger() {
  static const auto instance = [] {
    auto l = spdlog::stderr_color_mt("smartmask");
    l->set_pattern("%Y-%m-%dT%H:%M:%S.%e %^%l%$ %v");
    l->set_level(spdlog::level::info);
    return l;
  }();
  return *instance;
}

spdlog::level::level_enum to_spdlog(Level level) {
  switch (level) {
    case Level::trace: return spdlog::level::trace;
    case Level::debug: return spdlog::level::debug;
    case Level::info: return spdlog::level::info;
    case Level::warn: return spdlog::level::warn;
    case Level::error: return spdlog::level::err;
    case Level::off: return spdlog::level::off;
  }
  return spdlog::level::info;
}

Level current = Level::info;

}  // namespace

std::optional<Level> parse_level(std::string_view name) {
  std::string lower(name);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "trace") return Level::trace;
  if (lower == "debug") return Level::debug;
  if (lower == "info") return Level::info;
  if (lower == "warn" || lower == "warning") return Level::warn;
  if (lower == "error") return Level::error;
  if (lower == "off") return Level::off;
  return std::nullopt;
}

Level init_from_env() {
  if (const char* value = std::getenv(kLevelEnvVar)) {
    if (const auto parsed = parse_level(value)) {
      set_level(*parsed);
    } else {
      write(Level::warn, std::string("ignoring invalid ") + kLevelEnvVar + "=" + value);
    }
  }
  return current;
}

void set_level(Level level) {
  current = level;
  logger().set_level(to_spdlog(level));
}

Level level() { return current; }

void write(Level level, std::string_view message) {
  logger().log(to_spdlog(level), "{}", message);
}

}  // namespace smartmask::log
