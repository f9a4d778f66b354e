#include "ectr/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace ectr::log {

namespace {

Level from_env() {
  const char* v = std::getenv("ECTR_LOG");
  if (v == nullptr) return Level::info;
  const std::string s(v);
  if (s == "quiet") return Level::quiet;
  if (s == "trace") return Level::trace;
  return Level::info;
}

std::atomic<int>& current() {
  static std::atomic<int> lvl{static_cast<int>(from_env())};
  return lvl;
}

std::mutex sink_mutex;

}  // namespace

Level level() { return static_cast<Level>(current().load()); }

void set_level(Level l) { current().store(static_cast<int>(l)); }

void write(Level at, std::string_view message) {
  if (static_cast<int>(at) > current().load()) return;
  std::lock_guard lock(sink_mutex);
  std::cerr << "[ectr] " << message << '\n';
}

}  // namespace ectr::log
