#pragma once

#include <string_view>

#include <json.hpp>

namespace sentinel::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

/// Reads SENTINEL_LOG (debug|info|warn|error|off); defaults to info.
void init_from_env();
void set_level(Level level);
Level level();

/// Writes one JSON object per line to stderr: {"ts":..., "level":..., "msg":..., ...fields}.
void write(Level level, std::string_view msg, const nlohmann::json& fields = nlohmann::json::object());

inline void debug(std::string_view msg, const nlohmann::json& f = nlohmann::json::object()) { write(Level::Debug, msg, f); }
inline void info(std::string_view msg, const nlohmann::json& f = nlohmann::json::object()) { write(Level::Info, msg, f); }
inline void warn(std::string_view msg, const nlohmann::json& f = nlohmann::json::object()) { write(Level::Warn, msg, f); }
inline void error(std::string_view msg, const nlohmann::json& f = nlohmann::json::object()) { write(Level::Error, msg, f); }

}  // namespace sentinel::log
