#pragma once
// Tiny stderr logger with a process-wide threshold.

#include <string_view>

namespace kgp::log {

enum class Level { Debug = 0, Info = 1, Notice = 2, Warn = 3, Off = 4 };

void set_level(Level level);
Level level();

void write(Level level, std::string_view message);

inline void info(std::string_view m) { write(Level::Info, m); }
inline void notice(std::string_view m) { write(Level::Notice, m); }
inline void warn(std::string_view m) { write(Level::Warn, m); }

}  // namespace kgp::log
