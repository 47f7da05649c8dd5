#include <doctest.h>

#include <map>
#include <random>

#include "oracles.hpp"
#include "sentinel/agent.hpp"
#include "sentinel/crypto.hpp"

using namespace sentinel;
using namespace sentinel::agent;
using channel::MsgType;
using msg::CommandKind;

namespace {

const char* kOpenRoom = R"({"width":16,"height":16,"seed":1,"robot":{"x":3,"y":3,"heading":"E"}})";

Agent make_agent(const std::string& scenario = kOpenRoom, AgentConfig cfg = {}) {
  return Agent(world::load_scenario(scenario), cfg, BackupJournal({}));
}

std::string new_id() { return channel::format_uuid(channel::random_uuid()); }

msg::Command cmd(CommandKind k, std::optional<world::Move> dir = std::nullopt) { return {k, dir, new_id()}; }

std::size_t count(const std::vector<Effect>& es, MsgType t) {
  return static_cast<std::size_t>(std::count_if(es.begin(), es.end(), [&](const Effect& e) { return e.type == t; }));
}

msg::json reply_body(const std::vector<Effect>& es) {
  REQUIRE(!es.empty());
  return msg::parse_json(es.back().payload);
}

void enter(Agent& a, Mode m) {
  if (m == Mode::MotionDetection) a.handle_command(cmd(CommandKind::StartMotionDetection));
  if (m == Mode::Streaming) a.handle_command(cmd(CommandKind::StartStreaming));
  REQUIRE(a.state().mode == m);
}

}  // namespace

TEST_CASE("state machine: exhaustive mode x command table") {
  struct Row {
    Mode next;
    MsgType reply;
    const char* reason;
  };
  // Hand-written from the operation rules: moves and status requests leave the
  // mode alone, Stop always lands in Idle, a Start command is refused while the
  // other active mode runs and is a no-op in its own mode.
  const std::map<std::pair<Mode, CommandKind>, Row> table{
      {{Mode::Idle, CommandKind::Move}, {Mode::Idle, MsgType::Ack, ""}},
      {{Mode::Idle, CommandKind::StartMotionDetection}, {Mode::MotionDetection, MsgType::Ack, ""}},
      {{Mode::Idle, CommandKind::StartStreaming}, {Mode::Streaming, MsgType::Ack, ""}},
      {{Mode::Idle, CommandKind::Stop}, {Mode::Idle, MsgType::Ack, ""}},
      {{Mode::Idle, CommandKind::StatusRequest}, {Mode::Idle, MsgType::Ack, ""}},
      {{Mode::MotionDetection, CommandKind::Move}, {Mode::MotionDetection, MsgType::Ack, ""}},
      {{Mode::MotionDetection, CommandKind::StartMotionDetection}, {Mode::MotionDetection, MsgType::Ack, ""}},
      {{Mode::MotionDetection, CommandKind::StartStreaming}, {Mode::MotionDetection, MsgType::Error, "ModeConflict"}},
      {{Mode::MotionDetection, CommandKind::Stop}, {Mode::Idle, MsgType::Ack, ""}},
      {{Mode::MotionDetection, CommandKind::StatusRequest}, {Mode::MotionDetection, MsgType::Ack, ""}},
      {{Mode::Streaming, CommandKind::Move}, {Mode::Streaming, MsgType::Ack, ""}},
      {{Mode::Streaming, CommandKind::StartMotionDetection}, {Mode::Streaming, MsgType::Error, "ModeConflict"}},
      {{Mode::Streaming, CommandKind::StartStreaming}, {Mode::Streaming, MsgType::Ack, ""}},
      {{Mode::Streaming, CommandKind::Stop}, {Mode::Idle, MsgType::Ack, ""}},
      {{Mode::Streaming, CommandKind::StatusRequest}, {Mode::Streaming, MsgType::Ack, ""}},
  };
  CHECK(table.size() == 15);
  for (const auto& [key, row] : table) {
    const auto [mode, kind] = key;
    CAPTURE(to_string(mode));
    CAPTURE(msg::to_string(kind));
    auto a = make_agent();
    enter(a, mode);
    auto c = cmd(kind, kind == CommandKind::Move ? std::optional(world::Move::Forward) : std::nullopt);
    auto effects = a.handle_command(c);
    CHECK(a.state().mode == row.next);
    CHECK(a.state().motion.has_value() == (row.next == Mode::MotionDetection));
    REQUIRE(!effects.empty());
    CHECK(effects.back().type == row.reply);
    auto body = reply_body(effects);
    CHECK(body["command_id"] == c.command_id);
    if (row.reply == MsgType::Error) CHECK(body["reason"] == row.reason);
    if (kind == CommandKind::StatusRequest) CHECK(count(effects, MsgType::Status) == 1);
    if (kind == CommandKind::Move) CHECK(a.state().pose == world::RobotPose{4, 3, world::Heading::E});
  }
}

TEST_CASE("state machine: examples") {
  auto a = make_agent();
  a.handle_command(cmd(CommandKind::StartStreaming));
  CHECK(a.state().mode == Mode::Streaming);
  a.handle_command(cmd(CommandKind::Stop));
  CHECK(a.state().mode == Mode::Idle);

  a.handle_command(cmd(CommandKind::StartMotionDetection));
  a.handle_command(cmd(CommandKind::Move, world::Move::Forward));
  CHECK(a.state().pose == world::RobotPose{4, 3, world::Heading::E});
  CHECK(a.state().mode == Mode::MotionDetection);
}

TEST_CASE("state machine: blocked move is refused and pose is unchanged") {
  auto a = make_agent(R"({"width":16,"height":16,"seed":1,"robot":{"x":3,"y":3,"heading":"E"},"obstacles":[[4,3]]})");
  auto c = cmd(CommandKind::Move, world::Move::Forward);
  auto effects = a.handle_command(c);
  REQUIRE(effects.size() == 1);
  CHECK(effects[0].type == MsgType::Error);
  CHECK(reply_body(effects)["reason"] == "Blocked");
  CHECK(a.state().pose == world::RobotPose{3, 3, world::Heading::E});
}

TEST_CASE("state machine: duplicate command_id is answered from cache") {
  auto a = make_agent();
  auto c = cmd(CommandKind::Move, world::Move::Forward);
  auto first = a.handle_command(c);
  auto second = a.handle_command(c);
  CHECK(a.state().pose.x == 4);
  REQUIRE(second.size() == 1);
  CHECK(second[0].payload == first.back().payload);
}

TEST_CASE("state machine: malformed payloads produce BadCommand") {
  auto a = make_agent();
  const auto id = new_id();
  for (std::string text : {std::string("{"), std::string(R"({"kind":"Move","command_id":")" + id + "\"}"),
                           std::string(R"({"kind":"Fly","command_id":")" + id + "\"}"),
                           std::string(R"({"kind":"Stop","command_id":"nope"})"),
                           std::string(R"({"kind":"Stop","direction":"Forward","command_id":")" + id + "\"}")}) {
    CAPTURE(text);
    auto effects = a.handle_command_payload(to_bytes(text));
    REQUIRE(effects.size() == 1);
    CHECK(effects[0].type == MsgType::Error);
    CHECK(reply_body(effects)["reason"] == "BadCommand");
  }
  CHECK(a.state().mode == Mode::Idle);
}

TEST_CASE("fire_check: rule examples") {
  FireConfig cfg;
  auto r = [](double s, double t) { return world::SensorReading{s, t, 8, 8}; };
  CHECK(fire_check(r(10, 21), cfg, 0).counter == 0);
  CHECK_FALSE(fire_check(r(10, 21), cfg, 0).alert);

  int c = 0;
  std::vector<bool> alerts;
  for (int i = 0; i < 3; ++i) {
    auto f = fire_check(r(400, 21), cfg, c);
    c = f.counter;
    alerts.push_back(f.alert);
  }
  CHECK(alerts == std::vector<bool>{false, false, true});
  CHECK_FALSE(fire_check(r(400, 21), cfg, c).alert);

  auto spike = fire_check(r(400, 21), cfg, 0);
  auto after = fire_check(r(100, 21), cfg, spike.counter);
  CHECK(after.counter == 0);
  CHECK_FALSE(after.alert);

  c = 0;
  bool fired = false;
  for (int i = 0; i < 3; ++i) {
    auto f = fire_check(r(20, 80), cfg, c);
    c = f.counter;
    fired = fired || f.alert;
  }
  CHECK(fired);
}

TEST_CASE("fire_check: matches hand rule over random reading sequences") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    FireConfig cfg{250.0 + static_cast<double>(rng() % 100), 50.0 + static_cast<double>(rng() % 10),
                   1 + static_cast<int>(rng() % 5)};
    std::vector<std::pair<double, double>> seq;
    for (int i = 0; i < 60; ++i) seq.emplace_back(static_cast<double>(rng() % 500), static_cast<double>(rng() % 80));
    std::vector<std::size_t> got;
    int c = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      auto f = fire_check({seq[i].first, seq[i].second, 0, 0}, cfg, c);
      c = f.counter;
      if (f.alert) got.push_back(i);
    }
    CHECK(got == oracle::fire_alert_ticks(seq, cfg.smoke_threshold_ppm, cfg.temperature_threshold_c,
                                          cfg.debounce_ticks));
  }
}

TEST_CASE("fire watchdog runs in every mode") {
  // Two fires flanking the robot: 10 + 2*250 ppm, 21 + 2*30 C.
  const std::string scenario =
      R"({"width":16,"height":16,"seed":1,"robot":{"x":3,"y":3,"heading":"E"},)"
      R"("fires":[{"cell":[3,2],"ignition_tick":5},{"cell":[3,4],"ignition_tick":5}]})";
  for (auto mode : {Mode::Idle, Mode::MotionDetection, Mode::Streaming}) {
    CAPTURE(to_string(mode));
    auto a = make_agent(scenario);
    a.set_connected(true);
    enter(a, mode);
    std::vector<std::int64_t> alert_ticks;
    for (int i = 0; i < 20; ++i) {
      for (const auto& e : a.tick()) {
        if (e.type == MsgType::FireAlert) {
          alert_ticks.push_back(a.state().tick);
          REQUIRE(e.record_seq.has_value());
          auto body = msg::parse_json(e.payload);
          CHECK(body["seq"] == *e.record_seq);
          CHECK(body["smoke_ppm"].get<double>() > 300.0);
        }
      }
    }
    CHECK(alert_ticks == std::vector<std::int64_t>{7});
    CHECK(a.journal().size() >= 1);
  }
}

TEST_CASE("streaming: one FRAME per tick while connected, none offline") {
  auto a = make_agent();
  a.handle_command(cmd(CommandKind::StartStreaming));
  a.set_connected(true);
  std::uint64_t expect_index = 0;
  for (int i = 0; i < 25; ++i) {
    auto effects = a.tick();
    REQUIRE(count(effects, MsgType::Frame) == 1);
    for (const auto& e : effects) {
      if (e.type != MsgType::Frame) continue;
      auto f = msg::decode_frame_message(e.payload);
      CHECK(f.width == 32);
      CHECK(f.frame_index == expect_index++);
      CHECK(f == world::render_frame(a.world(), a.state().pose, f.frame_index, f.timestamp_ms));
    }
  }
  a.set_connected(false);
  for (int i = 0; i < 5; ++i) CHECK(count(a.tick(), MsgType::Frame) == 0);
}

TEST_CASE("status: live when connected, journaled when offline") {
  AgentConfig cfg;
  cfg.status_interval_ticks = 2;
  auto a = make_agent(kOpenRoom, cfg);
  a.set_connected(true);
  a.tick();
  auto e = a.tick();
  REQUIRE(count(e, MsgType::Status) == 1);
  CHECK_FALSE(e[0].record_seq.has_value());
  auto body = msg::parse_json(e[0].payload);
  CHECK(body["mode"] == "Idle");
  CHECK(body["pose"]["x"] == 3);
  CHECK(a.journal().empty());

  a.set_connected(false);
  a.tick();
  a.tick();
  REQUIRE(a.journal().size() == 1);
  CHECK(a.journal().records()[0].kind == RecordKind::Status);
}

TEST_CASE("motion detection: intruder produces one event and a matching clip") {
  // Intruder walks across the view two cells ahead of the robot.
  const std::string scenario =
      R"({"width":16,"height":16,"seed":1,"robot":{"x":3,"y":8,"heading":"N"},)"
      R"("intruders":[{"id":"p","path":[[1,6],[2,6],[3,6],[4,6],[5,6]],"active_from":20,"active_until":24}]})";
  auto a = make_agent(scenario);
  a.set_connected(true);
  a.handle_command(cmd(CommandKind::StartMotionDetection));
  std::vector<Effect> events, clips;
  for (int i = 0; i < 60; ++i) {
    for (auto& e : a.tick()) {
      if (e.type == MsgType::MotionEvent) events.push_back(e);
      if (e.type == MsgType::ClipUpload) clips.push_back(e);
    }
  }
  REQUIRE(events.size() == 1);
  REQUIRE(clips.size() == 1);
  auto ev = msg::parse_json(events[0].payload);
  auto up = msg::decode_clip_upload(clips[0].payload);
  CHECK(up.metadata["event_id"] == ev["event_id"]);
  CHECK(up.metadata["sha256"] == to_hex(crypto::sha256(up.container)));
  CHECK(a.stats().clip_sha256 == std::vector<std::string>{up.metadata["sha256"].get<std::string>()});
  auto frames = vision::decode_clip(up.container);
  const auto& d = a.config().detector;
  CHECK(frames.size() == static_cast<std::size_t>(d.pre_roll + 1 + d.post_roll));
  CHECK(frames.front().frame_index == up.metadata["first_frame_index"].get<std::uint64_t>());
  for (std::size_t i = 1; i < frames.size(); ++i) CHECK(frames[i].frame_index == frames[i - 1].frame_index + 1);
  CHECK(*events[0].record_seq < *clips[0].record_seq);
  CHECK(a.journal().size() == 2);
}

TEST_CASE("motion detection: Stop flushes a partial clip and drops the detector") {
  const std::string scenario =
      R"({"width":16,"height":16,"seed":1,"robot":{"x":3,"y":8,"heading":"N"},)"
      R"("intruders":[{"id":"p","path":[[1,6],[2,6],[3,6]],"active_from":10,"active_until":40}]})";
  auto a = make_agent(scenario);
  a.handle_command(cmd(CommandKind::StartMotionDetection));
  bool saw_event = false;
  for (int i = 0; i < 12 && !saw_event; ++i)
    for (auto& e : a.tick()) saw_event = saw_event || e.type == MsgType::MotionEvent;
  REQUIRE(saw_event);
  auto effects = a.handle_command(cmd(CommandKind::Stop));
  CHECK(count(effects, MsgType::ClipUpload) == 1);
  CHECK(effects.back().type == MsgType::Ack);
  CHECK_FALSE(a.state().motion.has_value());
}

TEST_CASE("agent config validation") {
  AgentConfig cfg;
  cfg.fire.debounce_ticks = 0;
  CHECK_THROWS(make_agent(kOpenRoom, cfg));
  cfg = {};
  cfg.tick_rate_hz = 0;
  CHECK_THROWS(make_agent(kOpenRoom, cfg));
}
