#pragma once

#include <string_view>

namespace commitlm::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Process-wide log level, read once from COMMITLM_LOG (error|warn|info|debug).
Level level();

void emit(Level lvl, std::string_view msg);

inline void error(std::string_view msg) { emit(Level::Error, msg); }
inline void warn(std::string_view msg) { emit(Level::Warn, msg); }
inline void info(std::string_view msg) { emit(Level::Info, msg); }
inline void debug(std::string_view msg) { emit(Level::Debug, msg); }

}  // namespace commitlm::log
