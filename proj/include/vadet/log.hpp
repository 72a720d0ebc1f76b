#pragma once

#include <atomic>
#include <iostream>
#include <string_view>

namespace vadet::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, quiet = 4 };

inline std::atomic<Level>& threshold() {
  static std::atomic<Level> level{Level::info};
  return level;
}

inline void write(Level lvl, std::string_view tag, std::string_view msg) {
  if (lvl < threshold().load()) return;
  std::clog << '[' << tag << "] " << msg << '\n';
}

inline void debug(std::string_view msg) { write(Level::debug, "debug", msg); }
inline void info(std::string_view msg) { write(Level::info, "info", msg); }
inline void warn(std::string_view msg) { write(Level::warn, "warn", msg); }
inline void error(std::string_view msg) { write(Level::error, "error", msg); }

}  // namespace vadet::log
