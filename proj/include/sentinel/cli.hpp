#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sentinel/agent.hpp"
#include "sentinel/robot.hpp"
#include "sentinel/server.hpp"

namespace sentinel::cli {

using json = nlohmann::json;

/// Bad configuration or usage; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int { kOk = 0, kRuntime = 1, kUsage = 2 };

/// Reads any JSON document. Throws ConfigError.
json load_json_file(const std::filesystem::path& path);
/// Reads a JSON config file, which must hold an object. Throws ConfigError.
json load_config_file(const std::filesystem::path& path);

/// A file may hold one object per subcommand ({"serve": {...}, "robot": {...}})
/// or a flat object for a single subcommand.
json select_section(const json& file, const std::string& subcommand);

/// Flag values win over file values, which win over defaults.
json layer(const json& file, const json& flags);

struct ServeSettings {
  server::ServerConfig server;
  std::string key_file;
  std::vector<std::string> allowlist;
  std::string ready_file;
};

struct RobotSettings {
  std::string scenario;
  std::string key_file;
  std::string server_key_file;
  agent::BackupJournal::Options journal;
  agent::AgentConfig agent;
  robot::RobotOptions options;  // server_public is filled from server_key_file by the caller
  std::string stats_file;
};

/// Build validated settings from a layered JSON object; unknown keys are errors.
ServeSettings serve_settings(const json& j);
RobotSettings robot_settings(const json& j);

json to_json(const robot::Snapshot& s);

}  // namespace sentinel::cli
