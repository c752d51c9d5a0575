#include "tealeaf/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tealeaf/error.hpp"

namespace tealeaf::log {

namespace {

spdlog::level::level_enum to_spdlog(Level level) {
  switch (level) {
    case Level::trace:
      return spdlog::level::trace;
    case Level::debug:
      return spdlog::level::debug;
    case Level::info:
      return spdlog::level::info;
    case Level::warn:
      return spdlog::level::warn;
    case Level::error:
      return spdlog::level::err;
    case Level::off:
      break;
  }
  return spdlog::level::off;
}

}  // namespace

Level parse_level(std::string_view name) {
  if (name == "trace") return Level::trace;
  if (name == "debug") return Level::debug;
  if (name == "info") return Level::info;
  if (name == "warn" || name == "warning") return Level::warn;
  if (name == "error") return Level::error;
  if (name == "off") return Level::off;
  throw Error(ErrorCode::ConfigInvalid, "unknown log level '" + std::string(name) + "'");
}

void set_level(Level level) { spdlog::set_level(to_spdlog(level)); }

void use_stderr() {
  if (auto existing = spdlog::get("tealeaf")) {
    spdlog::set_default_logger(existing);
    return;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("tealeaf"));
}

void write(Level level, const std::string& message) { spdlog::log(to_spdlog(level), "{}", message); }

}  // namespace tealeaf::log
