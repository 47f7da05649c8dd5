#include "sentinel/messages.hpp"

#include "sentinel/channel.hpp"

namespace sentinel::msg {

std::string_view to_string(CommandKind k) {
  switch (k) {
    case CommandKind::Move: return "Move";
    case CommandKind::StartMotionDetection: return "StartMotionDetection";
    case CommandKind::StartStreaming: return "StartStreaming";
    case CommandKind::Stop: return "Stop";
    case CommandKind::StatusRequest: return "StatusRequest";
  }
  return "?";
}

std::optional<CommandKind> parse_command_kind(std::string_view s) {
  for (auto k : {CommandKind::Move, CommandKind::StartMotionDetection, CommandKind::StartStreaming, CommandKind::Stop,
                 CommandKind::StatusRequest}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

Command parse_command(const json& j) {
  if (!j.is_object()) throw BadCommand("command must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "kind" && key != "direction" && key != "command_id") throw BadCommand("unknown command field '" + key + "'");
  }
  Command c;
  auto kind = j.find("kind");
  if (kind == j.end() || !kind->is_string()) throw BadCommand("command.kind must be a string");
  auto k = parse_command_kind(kind->get<std::string>());
  if (!k) throw BadCommand("unknown command kind '" + kind->get<std::string>() + "'");
  c.kind = *k;

  auto dir = j.find("direction");
  if (c.kind == CommandKind::Move) {
    if (dir == j.end() || !dir->is_string()) throw BadCommand("Move requires a direction");
    auto m = world::parse_move(dir->get<std::string>());
    if (!m) throw BadCommand("unknown direction '" + dir->get<std::string>() + "'");
    c.direction = *m;
  } else if (dir != j.end() && !dir->is_null()) {
    throw BadCommand("direction is only valid for Move");
  }

  auto id = j.find("command_id");
  if (id == j.end() || !id->is_string() || !channel::parse_uuid(id->get<std::string>())) {
    throw BadCommand("command_id must be a UUID string");
  }
  c.command_id = id->get<std::string>();
  return c;
}

json to_json(const Command& c) {
  json j{{"kind", to_string(c.kind)}, {"command_id", c.command_id}};
  if (c.direction) j["direction"] = world::to_string(*c.direction);
  return j;
}

json pose_json(const world::RobotPose& p) {
  return {{"x", p.x}, {"y", p.y}, {"heading", world::to_string(p.heading)}};
}

world::RobotPose parse_pose(const json& j) {
  world::RobotPose p;
  p.x = j.at("x").get<int>();
  p.y = j.at("y").get<int>();
  auto h = world::parse_heading(j.at("heading").get<std::string>());
  if (!h) throw std::invalid_argument("bad heading");
  p.heading = *h;
  return p;
}

json sensors_json(const world::SensorReading& r) {
  return {{"smoke_ppm", r.smoke_ppm},
          {"temperature_c", r.temperature_c},
          {"proximity_front", r.proximity_front},
          {"proximity_rear", r.proximity_rear}};
}

Bytes encode_frame_message(const vision::Frame& f) {
  vision::validate(f);
  Bytes out;
  out.reserve(20 + f.pixels.size());
  put_u16(out, static_cast<std::uint16_t>(f.width));
  put_u16(out, static_cast<std::uint16_t>(f.height));
  put_u64(out, f.frame_index);
  put_u64(out, f.timestamp_ms);
  put_bytes(out, f.pixels);
  return out;
}

vision::Frame decode_frame_message(ByteView data) {
  Reader in(data);
  vision::Frame f;
  f.width = in.u16();
  f.height = in.u16();
  f.frame_index = in.u64();
  f.timestamp_ms = in.u64();
  const std::size_t n = static_cast<std::size_t>(f.width) * f.height;
  if (n == 0 || in.remaining() != n) throw DecodeError("frame message length does not match dimensions");
  auto px = in.take(n);
  f.pixels.assign(px.begin(), px.end());
  return f;
}

Bytes encode_clip_upload(const ClipUpload& c) {
  const std::string meta = c.metadata.dump();
  Bytes out;
  out.reserve(4 + meta.size() + c.container.size());
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  put_bytes(out, to_bytes(meta));
  put_bytes(out, c.container);
  return out;
}

ClipUpload decode_clip_upload(ByteView data) {
  Reader in(data);
  const std::uint32_t len = in.u32();
  auto meta = in.take(len);
  ClipUpload c;
  c.metadata = json::parse(meta.begin(), meta.end());
  auto rest = in.take(in.remaining());
  c.container.assign(rest.begin(), rest.end());
  return c;
}

}  // namespace sentinel::msg
