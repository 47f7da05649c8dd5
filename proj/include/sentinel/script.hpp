#pragma once

#include <string>

#include <json.hpp>

#include "sentinel/net.hpp"

namespace sentinel::cli {

/// Headless operator: runs a JSON list of API operations against a server.
///
/// Ops: register, login, wait_robots, command, wait_status, expect_pose,
/// events, expect_notification, subscribe_stream, get_clip, request, sleep.
/// `robot` fields take an index into the list captured by wait_robots, or a
/// robot id. `login` also opens the notifications feed that
/// expect_notification reads from.
struct ScriptResult {
  bool ok = true;
  nlohmann::json transcript = nlohmann::json::array();
};

/// Throws ConfigError when the script is malformed (before any request is made).
void check_script(const nlohmann::json& script);

/// Runs until the first failing op. Network errors count as failures.
ScriptResult run_script(const nlohmann::json& script, const net::HostPort& server);

}  // namespace sentinel::cli
