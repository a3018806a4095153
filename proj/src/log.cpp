#include "tfnet/log.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>

#include "tfnet/error.hpp"

namespace tfnet {

namespace {

std::optional<LogLevel>& current() {
  static std::optional<LogLevel> level;
  return level;
}

LogLevel from_environment() {
  const char* v = std::getenv("TFNET_LOG");
  if (v == nullptr) return LogLevel::Info;
  const std::string s = v;
  if (s == "quiet") return LogLevel::Quiet;
  if (s == "info" || s.empty()) return LogLevel::Info;
  if (s == "debug") return LogLevel::Debug;
  throw ConfigError("TFNET_LOG must be quiet, info or debug, got '" + s + "'");
}

}  // namespace

LogLevel log_level() {
  if (!current()) current() = from_environment();
  return *current();
}

void set_log_level(LogLevel level) { current() = level; }

void log(LogLevel level, const std::string& message) {
  if (static_cast<int>(level) <= static_cast<int>(log_level())) std::cerr << message << '\n';
}

}  // namespace tfnet
