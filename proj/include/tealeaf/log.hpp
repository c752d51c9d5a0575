#pragma once

#include <sstream>
#include <string>
#include <string_view>

// Thin front for spdlog. spdlog stays behind log.cpp because torch bundles
// a newer fmt than the system spdlog was built against.
namespace tealeaf::log {

enum class Level { trace, debug, info, warn, error, off };

/// Throws ConfigInvalid for an unknown name.
Level parse_level(std::string_view name);
void set_level(Level level);
/// Routes all output to stderr (stdout stays free for command results).
void use_stderr();
void write(Level level, const std::string& message);

template <typename... Args>
std::string cat(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

template <typename... Args>
void info(const Args&... args) {
  write(Level::info, cat(args...));
}
template <typename... Args>
void warn(const Args&... args) {
  write(Level::warn, cat(args...));
}
template <typename... Args>
void error(const Args&... args) {
  write(Level::error, cat(args...));
}

}  // namespace tealeaf::log
