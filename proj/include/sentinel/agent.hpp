#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sentinel/channel.hpp"
#include "sentinel/journal.hpp"
#include "sentinel/messages.hpp"
#include "sentinel/vision.hpp"
#include "sentinel/world.hpp"

namespace sentinel::agent {

enum class Mode { Idle, MotionDetection, Streaming };

std::string_view to_string(Mode m);

struct FireConfig {
  double smoke_threshold_ppm = 300.0;
  double temperature_threshold_c = 57.0;
  int debounce_ticks = 3;

  void validate() const;
};

struct FireCheck {
  int counter = 0;
  bool alert = false;
};

/// Over-threshold on smoke OR temperature. Alerts exactly once when the run of
/// consecutive over-threshold readings reaches `debounce_ticks`.
FireCheck fire_check(const world::SensorReading& reading, const FireConfig& cfg, int counter);

struct MotionSession {
  std::optional<vision::BackgroundModel> model;  // seeded from the first frame after start
  vision::ClipBuffer clips;
  std::uint64_t next_frame_index = 0;
  std::string open_event_id;  // event the collecting clip belongs to
};

struct AgentState {
  Mode mode = Mode::Idle;
  world::RobotPose pose;
  bool connected = false;
  std::optional<MotionSession> motion;  // present iff mode == MotionDetection
  int fire_debounce = 0;
  std::int64_t tick = 0;
  std::uint64_t stream_frame_index = 0;
};

/// Something the agent wants to tell the server. Journaled effects are
/// already in the backlog and are delivered by the journal flush.
struct Effect {
  channel::MsgType type = channel::MsgType::Status;
  Bytes payload;
  std::optional<std::uint64_t> record_seq;
};

struct AgentConfig {
  vision::DetectorConfig detector = default_detector();
  FireConfig fire;
  int tick_rate_hz = 10;
  int status_interval_ticks = 10;

  /// Detector defaults for the 32x32 camera: a single intruder cell is 1/1024 of
  /// the frame, so the area threshold sits below one pixel's share.
  static vision::DetectorConfig default_detector() {
    vision::DetectorConfig d;
    d.area_fraction = 0.0005;
    return d;
  }
  void validate() const;
};

struct AgentStats {
  std::uint64_t motion_events = 0;
  std::uint64_t fire_alerts = 0;
  std::uint64_t clips = 0;
  std::uint64_t frames = 0;
  std::uint64_t journal_drops = 0;
  std::vector<std::string> clip_sha256;  // hex digests of every clip produced
};

/// The robot's brain. Owns its world instance; single-threaded.
class Agent {
 public:
  Agent(world::Scenario scenario, AgentConfig config, BackupJournal journal);

  std::vector<Effect> handle_command(const msg::Command& cmd);
  /// Parses the COMMAND payload first; malformed input yields an ERROR effect.
  std::vector<Effect> handle_command_payload(ByteView payload);
  std::vector<Effect> tick();

  void set_connected(bool connected) { state_.connected = connected; }
  Effect status_effect();

  const AgentState& state() const { return state_; }
  const world::WorldGrid& world() const { return world_; }
  const AgentConfig& config() const { return config_; }
  BackupJournal& journal() { return journal_; }
  const BackupJournal& journal() const { return journal_; }
  const AgentStats& stats() const { return stats_; }

 private:
  std::vector<Effect> execute(const msg::Command& cmd);
  Effect reply_ok(const msg::Command& cmd);
  Effect reply_error(const std::string& command_id, std::string_view reason, const std::string& detail);
  std::optional<Effect> journal_record(RecordKind kind, const msg::json& body);
  std::optional<Effect> journal_clip(const vision::Clip& clip, const std::string& event_id);
  std::vector<Effect> close_motion_session();
  std::uint64_t timestamp_ms() const;

  world::WorldGrid world_;
  AgentConfig config_;
  BackupJournal journal_;
  AgentState state_;
  AgentStats stats_;
  world::SensorReading last_reading_{};

  // Idempotency cache: command_id -> reply, bounded FIFO.
  std::unordered_map<std::string, Effect> replies_;
  std::deque<std::string> reply_order_;
};

}  // namespace sentinel::agent
