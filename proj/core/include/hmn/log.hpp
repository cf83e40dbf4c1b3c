#pragma once

#include <string>

namespace hmn {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// Current level. Initialized from the HMN_LOG environment variable
// (error|info|debug, default info) on first use.
LogLevel log_level();
void set_log_level(LogLevel level);

// Writes "[hmn] message" to stderr when `level` is enabled.
void log_message(LogLevel level, const std::string& message);

inline void log_error(const std::string& m) { log_message(LogLevel::kError, m); }
inline void log_info(const std::string& m) { log_message(LogLevel::kInfo, m); }
inline void log_debug(const std::string& m) { log_message(LogLevel::kDebug, m); }

}  // namespace hmn
