#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace mmfuse::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

// Level from MMFUSE_LOG (error|warn|info|debug); defaults to warn.
inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("MMFUSE_LOG");
    const std::string_view v = env ? env : "";
    if (v == "error") return Level::error;
    if (v == "info") return Level::info;
    if (v == "debug") return Level::debug;
    return Level::warn;
  }();
  return level;
}

inline void write(Level level, std::string_view tag, const std::string& msg) {
  if (static_cast<int>(level) <= static_cast<int>(threshold())) std::clog << "[" << tag << "] " << msg << '\n';
}

inline void info(const std::string& msg) { write(Level::info, "info", msg); }
inline void debug(const std::string& msg) { write(Level::debug, "debug", msg); }
inline void warn(const std::string& msg) { write(Level::warn, "warn", msg); }

}  // namespace mmfuse::log
