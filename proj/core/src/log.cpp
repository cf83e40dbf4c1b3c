#include "hmn/log.hpp"

#include <cstdlib>
#include <iostream>
#include <string>

namespace hmn {

namespace {

LogLevel level_from_env() {
  const char* env = std::getenv("HMN_LOG");
  if (!env) return LogLevel::kInfo;
  std::string v(env);
  if (v == "error") return LogLevel::kError;
  if (v == "info") return LogLevel::kInfo;
  if (v == "debug") return LogLevel::kDebug;
  return LogLevel::kInfo;  // unrecognized values fall back to the default
}

LogLevel& level_ref() {
  static LogLevel level = level_from_env();
  return level;
}

}  // namespace

LogLevel log_level() { return level_ref(); }

void set_log_level(LogLevel level) { level_ref() = level; }

void log_message(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  std::cerr << "[hmn] " << msg << '\n';
}

}  // namespace hmn
