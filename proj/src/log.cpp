#include "csmsckf/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace csmsckf::log {

namespace {
std::atomic<Level> g_level{Level::kWarn};
std::mutex g_mutex;
}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void write(Level level, const std::string& message) {
  static constexpr const char* kTags[] = {"debug", "info", "warn", "error", ""};
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << "[" << kTags[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace csmsckf::log
