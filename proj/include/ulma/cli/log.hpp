#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace ulma::cli {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

/// Level from ULMA_LOG={error|info|debug}; defaults to error.
inline LogLevel log_level() {
  const char* v = std::getenv("ULMA_LOG");
  if (!v) return LogLevel::Error;
  const std::string_view s(v);
  if (s == "debug") return LogLevel::Debug;
  if (s == "info") return LogLevel::Info;
  return LogLevel::Error;
}

inline void log(LogLevel level, std::string_view msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static constexpr std::string_view names[] = {"error", "info", "debug"};
  std::clog << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void info(std::string_view msg) { log(LogLevel::Info, msg); }
inline void debug(std::string_view msg) { log(LogLevel::Debug, msg); }

}  // namespace ulma::cli
