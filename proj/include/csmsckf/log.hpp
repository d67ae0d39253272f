#pragma once

#include <sstream>
#include <string>

namespace csmsckf::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

void set_level(Level level);
Level level();
void write(Level level, const std::string& message);

template <typename... Args>
void warn(const Args&... args) {
  if (level() > Level::kWarn) return;
  std::ostringstream os;
  (os << ... << args);
  write(Level::kWarn, os.str());
}

template <typename... Args>
void info(const Args&... args) {
  if (level() > Level::kInfo) return;
  std::ostringstream os;
  (os << ... << args);
  write(Level::kInfo, os.str());
}

}  // namespace csmsckf::log
