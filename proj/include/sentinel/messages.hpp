#pragma once

// Application payloads carried inside envelopes. JSON field names here are
// the API contract shared by robot, server and operator clients.

#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "sentinel/bytes.hpp"
#include "sentinel/vision.hpp"
#include "sentinel/world.hpp"

namespace sentinel::msg {

using nlohmann::json;

enum class CommandKind { Move, StartMotionDetection, StartStreaming, Stop, StatusRequest };

std::string_view to_string(CommandKind k);
std::optional<CommandKind> parse_command_kind(std::string_view s);

class BadCommand : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Command {
  CommandKind kind = CommandKind::StatusRequest;
  std::optional<world::Move> direction;  // present iff kind == Move
  std::string command_id;                // UUID text form
};

/// {"kind":"Move","direction":"Forward","command_id":"..."}; throws BadCommand.
Command parse_command(const json& j);
json to_json(const Command& c);

json pose_json(const world::RobotPose& p);
world::RobotPose parse_pose(const json& j);
json sensors_json(const world::SensorReading& r);

/// FRAME payload and WS stream message:
/// u16 width | u16 height | u64 frame_index | u64 timestamp_ms | pixels.
Bytes encode_frame_message(const vision::Frame& f);
vision::Frame decode_frame_message(ByteView data);

/// CLIP_UPLOAD payload: u32 metadata length | metadata JSON | SVC1 container.
struct ClipUpload {
  json metadata;  // event_id, seq, sha256, frame_count, first_frame_index
  Bytes container;
};

Bytes encode_clip_upload(const ClipUpload& c);
ClipUpload decode_clip_upload(ByteView data);

inline Bytes json_bytes(const json& j) { return to_bytes(j.dump()); }
/// Throws json::parse_error on invalid input.
inline json parse_json(ByteView b) { return json::parse(b.begin(), b.end()); }

}  // namespace sentinel::msg
