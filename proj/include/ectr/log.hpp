#pragma once

#include <string_view>

namespace ectr::log {

enum class Level { quiet = 0, info = 1, trace = 2 };

/// Read once from ECTR_LOG ∈ {quiet, info, trace}; defaults to info.
Level level();
void set_level(Level l);

/// Writes one line to stderr when the current level admits it. Thread-safe.
void write(Level at, std::string_view message);
inline void info(std::string_view m) { write(Level::info, m); }
inline void trace(std::string_view m) { write(Level::trace, m); }

}  // namespace ectr::log
