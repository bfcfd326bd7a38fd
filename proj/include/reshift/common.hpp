#pragma once

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace reshift {

// Log levels, selected via the RESHIFT_LOG environment variable
// (error|warn|info|debug). Default is warn.
enum class LogLevel : int { error = 0, warn = 1, info = 2, debug = 3 };

inline LogLevel& log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("RESHIFT_LOG");
    if (!env) return LogLevel::warn;
    if (std::strcmp(env, "error") == 0) return LogLevel::error;
    if (std::strcmp(env, "warn") == 0) return LogLevel::warn;
    if (std::strcmp(env, "info") == 0) return LogLevel::info;
    if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
    return LogLevel::warn;
  }();
  return level;
}

inline void log_msg(LogLevel level, const char* tag, const char* fmt, va_list ap) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  std::fprintf(stderr, "[reshift %s] ", tag);
  std::vfprintf(stderr, fmt, ap);
  std::fputc('\n', stderr);
}

inline void log_error(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  log_msg(LogLevel::error, "error", fmt, ap);
  va_end(ap);
}

inline void log_warn(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  log_msg(LogLevel::warn, "warn", fmt, ap);
  va_end(ap);
}

inline void log_info(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  log_msg(LogLevel::info, "info", fmt, ap);
  va_end(ap);
}

inline void log_debug(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  log_msg(LogLevel::debug, "debug", fmt, ap);
  va_end(ap);
}

// Thrown for invalid arguments, malformed configs, and contract violations.
// The CLI maps it to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown for runtime failures (I/O, numeric blowups). CLI exit code 1.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool is_power_of_two(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace reshift
