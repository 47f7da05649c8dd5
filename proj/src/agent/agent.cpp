#include "sentinel/agent.hpp"

#include "sentinel/crypto.hpp"

namespace sentinel::agent {

using channel::MsgType;
using msg::json;

namespace {
constexpr std::size_t kReplyCacheSize = 1024;
}

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Idle: return "Idle";
    case Mode::MotionDetection: return "MotionDetection";
    case Mode::Streaming: return "Streaming";
  }
  return "?";
}

void FireConfig::validate() const {
  if (!(smoke_threshold_ppm > 0) || !(temperature_threshold_c > 0) || debounce_ticks <= 0) {
    throw std::invalid_argument("fire thresholds and debounce must be positive");
  }
}

void AgentConfig::validate() const {
  detector.validate();
  fire.validate();
  if (tick_rate_hz <= 0 || tick_rate_hz > 1000) throw std::invalid_argument("tick_rate_hz must be in 1..1000");
  if (status_interval_ticks <= 0) throw std::invalid_argument("status_interval_ticks must be positive");
}

FireCheck fire_check(const world::SensorReading& reading, const FireConfig& cfg, int counter) {
  const bool over = reading.smoke_ppm > cfg.smoke_threshold_ppm || reading.temperature_c > cfg.temperature_threshold_c;
  if (!over) return {0, false};
  if (counter >= cfg.debounce_ticks) return {counter, false};  // holding after an alert
  const int next = counter + 1;
  return {next, next == cfg.debounce_ticks};
}

Agent::Agent(world::Scenario scenario, AgentConfig config, BackupJournal journal)
    : world_(std::move(scenario.world)), config_(std::move(config)), journal_(std::move(journal)) {
  config_.validate();
  state_.pose = scenario.robot;
  state_.tick = world_.tick;
  last_reading_ = world::read_sensors(world_, state_.pose);
}

std::uint64_t Agent::timestamp_ms() const {
  return static_cast<std::uint64_t>(world_.tick) * 1000u / static_cast<std::uint64_t>(config_.tick_rate_hz);
}

Effect Agent::status_effect() {
  json body{{"mode", to_string(state_.mode)},
            {"pose", msg::pose_json(state_.pose)},
            {"sensors", msg::sensors_json(last_reading_)},
            {"tick", state_.tick},
            {"journal_depth", journal_.size()}};
  return Effect{MsgType::Status, msg::json_bytes(body), std::nullopt};
}

Effect Agent::reply_ok(const msg::Command& cmd) {
  json body{{"command_id", cmd.command_id},
            {"kind", msg::to_string(cmd.kind)},
            {"result", "ok"},
            {"mode", to_string(state_.mode)},
            {"pose", msg::pose_json(state_.pose)}};
  return Effect{MsgType::Ack, msg::json_bytes(body), std::nullopt};
}

Effect Agent::reply_error(const std::string& command_id, std::string_view reason, const std::string& detail) {
  json body{{"command_id", command_id},
            {"reason", reason},
            {"detail", detail},
            {"mode", to_string(state_.mode)},
            {"pose", msg::pose_json(state_.pose)}};
  return Effect{MsgType::Error, msg::json_bytes(body), std::nullopt};
}

std::optional<Effect> Agent::journal_record(RecordKind kind, const json& body_in) {
  json body = body_in;
  const std::uint64_t seq = journal_.next_seq();
  body["seq"] = seq;
  JournalRecord rec{seq, kind, msg::json_bytes(body)};
  Effect e{static_cast<MsgType>(kind), rec.payload, seq};
  try {
    journal_.append(std::move(rec));
  } catch (const StorageFull&) {
    ++stats_.journal_drops;
    return std::nullopt;
  }
  return e;
}

std::optional<Effect> Agent::journal_clip(const vision::Clip& clip, const std::string& event_id) {
  msg::ClipUpload upload;
  upload.container = vision::encode_clip(clip.frames);
  const auto digest = to_hex(crypto::sha256(upload.container));
  const std::uint64_t seq = journal_.next_seq();
  upload.metadata = {{"event_id", event_id},
                     {"seq", seq},
                     {"sha256", digest},
                     {"frame_count", clip.frames.size()},
                     {"first_frame_index", clip.frames.front().frame_index},
                     {"trigger_frame_index", clip.event.frame_index}};
  JournalRecord rec{seq, RecordKind::ClipUpload, msg::encode_clip_upload(upload)};
  Effect e{MsgType::ClipUpload, rec.payload, seq};
  ++stats_.clips;
  stats_.clip_sha256.push_back(digest);
  try {
    journal_.append(std::move(rec));
  } catch (const StorageFull&) {
    ++stats_.journal_drops;
    return std::nullopt;
  }
  return e;
}

std::vector<Effect> Agent::close_motion_session() {
  std::vector<Effect> out;
  if (state_.motion) {
    if (auto clip = state_.motion->clips.finish()) {
      if (auto e = journal_clip(*clip, state_.motion->open_event_id)) out.push_back(std::move(*e));
    }
  }
  state_.motion.reset();
  return out;
}

std::vector<Effect> Agent::handle_command_payload(ByteView payload) {
  msg::Command cmd;
  try {
    cmd = msg::parse_command(msg::parse_json(payload));
  } catch (const std::exception& e) {
    std::string id;
    try {
      auto j = msg::parse_json(payload);
      if (j.is_object() && j.contains("command_id") && j["command_id"].is_string()) id = j["command_id"];
    } catch (...) {
    }
    return {reply_error(id, "BadCommand", e.what())};
  }
  return handle_command(cmd);
}

std::vector<Effect> Agent::handle_command(const msg::Command& cmd) {
  if (auto cached = replies_.find(cmd.command_id); cached != replies_.end()) return {cached->second};

  std::vector<Effect> out = execute(cmd);
  // The command reply is always the last effect.
  replies_.emplace(cmd.command_id, out.back());
  reply_order_.push_back(cmd.command_id);
  if (reply_order_.size() > kReplyCacheSize) {
    replies_.erase(reply_order_.front());
    reply_order_.pop_front();
  }
  return out;
}

std::vector<Effect> Agent::execute(const msg::Command& cmd) {
  std::vector<Effect> out;
  switch (cmd.kind) {
    case msg::CommandKind::Move: {
      if (!cmd.direction) {
        out.push_back(reply_error(cmd.command_id, "BadCommand", "Move requires a direction"));
        break;
      }
      auto result = world::apply_move(world_, state_.pose, *cmd.direction);
      if (result.blocked) {
        out.push_back(reply_error(cmd.command_id, "Blocked", "path obstructed"));
      } else {
        state_.pose = result.pose;
        last_reading_ = world::read_sensors(world_, state_.pose);
        out.push_back(reply_ok(cmd));
      }
      break;
    }
    case msg::CommandKind::StartMotionDetection:
      if (state_.mode == Mode::Streaming) {
        out.push_back(reply_error(cmd.command_id, "ModeConflict", "stop streaming first"));
      } else {
        if (state_.mode == Mode::Idle) {
          state_.mode = Mode::MotionDetection;
          state_.motion.emplace(MotionSession{std::nullopt,
                                              vision::ClipBuffer(static_cast<std::size_t>(config_.detector.pre_roll),
                                                                 static_cast<std::size_t>(config_.detector.post_roll)),
                                              0, {}});
        }
        out.push_back(reply_ok(cmd));
      }
      break;
    case msg::CommandKind::StartStreaming:
      if (state_.mode == Mode::MotionDetection) {
        out.push_back(reply_error(cmd.command_id, "ModeConflict", "stop motion detection first"));
      } else {
        if (state_.mode == Mode::Idle) {
          state_.mode = Mode::Streaming;
          state_.stream_frame_index = 0;
        }
        out.push_back(reply_ok(cmd));
      }
      break;
    case msg::CommandKind::Stop:
      out = close_motion_session();
      state_.mode = Mode::Idle;
      out.push_back(reply_ok(cmd));
      break;
    case msg::CommandKind::StatusRequest:
      out.push_back(status_effect());
      out.push_back(reply_ok(cmd));
      break;
  }
  return out;
}

std::vector<Effect> Agent::tick() {
  std::vector<Effect> out;
  world::step_in_place(world_);
  state_.tick = world_.tick;
  last_reading_ = world::read_sensors(world_, state_.pose);

  const auto fire = fire_check(last_reading_, config_.fire, state_.fire_debounce);
  state_.fire_debounce = fire.counter;
  if (fire.alert) {
    ++stats_.fire_alerts;
    json body{{"event_id", channel::format_uuid(channel::random_uuid())},
              {"tick", state_.tick},
              {"timestamp_ms", timestamp_ms()},
              {"smoke_ppm", last_reading_.smoke_ppm},
              {"temperature_c", last_reading_.temperature_c},
              {"pose", msg::pose_json(state_.pose)}};
    if (auto e = journal_record(RecordKind::FireAlert, body)) out.push_back(std::move(*e));
  }

  if (state_.mode == Mode::MotionDetection) {
    auto& session = *state_.motion;
    auto frame = world::render_frame(world_, state_.pose, session.next_frame_index++, timestamp_ms());
    if (state_.connected) {
      out.push_back(Effect{MsgType::Frame, msg::encode_frame_message(frame), std::nullopt});
      ++stats_.frames;
    }
    if (!session.model) {
      session.model = vision::init_background(frame);
    } else {
      auto det = vision::detect(*session.model, frame, config_.detector);
      session.model = std::move(det.model);
      if (det.event && session.clips.trigger(*det.event)) {
        ++stats_.motion_events;
        session.open_event_id = channel::format_uuid(channel::random_uuid());
        const auto& ev = *det.event;
        json body{{"event_id", session.open_event_id},
                  {"tick", state_.tick},
                  {"timestamp_ms", frame.timestamp_ms},
                  {"frame_index", ev.frame_index},
                  {"changed_fraction", ev.changed_fraction},
                  {"bbox", {ev.bbox.x_min, ev.bbox.y_min, ev.bbox.x_max, ev.bbox.y_max}},
                  {"pose", msg::pose_json(state_.pose)}};
        if (auto e = journal_record(RecordKind::MotionEvent, body)) out.push_back(std::move(*e));
      }
    }
    if (auto clip = session.clips.push(std::move(frame))) {
      if (auto e = journal_clip(*clip, session.open_event_id)) out.push_back(std::move(*e));
    }
  } else if (state_.mode == Mode::Streaming) {
    auto frame = world::render_frame(world_, state_.pose, state_.stream_frame_index++, timestamp_ms());
    if (state_.connected) {
      out.push_back(Effect{MsgType::Frame, msg::encode_frame_message(frame), std::nullopt});
      ++stats_.frames;
    }
  }

  if (state_.tick % config_.status_interval_ticks == 0) {
    if (state_.connected) {
      out.push_back(status_effect());
    } else {
      auto body = msg::parse_json(status_effect().payload);
      body["offline"] = true;
      if (auto e = journal_record(RecordKind::Status, body)) out.push_back(std::move(*e));
    }
  }
  return out;
}

}  // namespace sentinel::agent
