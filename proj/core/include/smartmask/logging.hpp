#pragma once

#include <optional>
#include <string_view>

namespace smartmask::log {

enum class Level { trace, debug, info, warn, error, off };

inline constexpr const char* kLevelEnvVar = "SMARTMASK_LOG_LEVEL";

std::optional<Level> parse_level(std::string_view name);

// Applies SMARTMASK_LOG_LEVEL if set and valid; the default is info.
// Returns the level in effect.
Level init_from_env();
void set_level(Level level);
Level level();

void write(Level level, std::string_view message);

inline void debug(std::string_view message) { write(Level::debug, message); }
inline void info(std::string_view message) { write(Level::info, message); }
inline void warn(std::string_view message) { write(Level::warn, message); }
inline void error(std::string_view message) { write(Level::error, message); }

}  // namespace smartmask::log
