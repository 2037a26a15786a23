#pragma once

#include <atomic>
#include <cstdio>
#include <string>

namespace stringgp::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

inline std::atomic<int>& threshold() {
  static std::atomic<int> level{static_cast<int>(Level::warn)};
  return level;
}

inline void set_level(Level l) { threshold() = static_cast<int>(l); }

inline void write(Level l, const std::string& msg) {
  if (static_cast<int>(l) < threshold()) return;
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::fprintf(stderr, "[stringgp:%s] %s\n", names[static_cast<int>(l)], msg.c_str());
}

inline void debug(const std::string& m) { write(Level::debug, m); }
inline void info(const std::string& m) { write(Level::info, m); }
inline void warn(const std::string& m) { write(Level::warn, m); }

}  // namespace stringgp::log
