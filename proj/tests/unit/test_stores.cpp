#include <doctest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include "harness.hpp"
#include "sentinel/stores.hpp"
#include "sentinel/vision.hpp"

using namespace sentinel;
using namespace sentinel::server;
using harness::TempDir;

namespace {

const crypto::ScryptParams kFast{1u << 10, 8, 1};

EventRecord event(const std::string& id, EventKind kind, const std::string& robot, std::uint64_t seq) {
  EventRecord e;
  e.event_id = id;
  e.robot_id = robot;
  e.kind = kind;
  e.seq = seq;
  e.timestamp_ms = static_cast<std::int64_t>(seq) * 100;
  e.stream_link = "/api/robots/" + robot + "/stream";
  return e;
}

}  // namespace

TEST_CASE("users: validation, duplicates and persistence") {
  TempDir dir;
  const auto file = dir.path / "users.jsonl";
  {
    UserStore users(file, kFast);
    std::string why;
    CHECK(users.register_user("alice", "password1", &why) == RegisterResult::Created);
    CHECK(users.register_user("alice", "password2") == RegisterResult::Duplicate);
    CHECK(users.register_user("", "password1", &why) == RegisterResult::Invalid);
    CHECK_FALSE(why.empty());
    CHECK(users.register_user(std::string(65, 'a'), "password1") == RegisterResult::Invalid);
    CHECK(users.register_user(std::string(64, 'a'), "password1") == RegisterResult::Created);
    CHECK(users.register_user("a b", "password1") == RegisterResult::Invalid);
    CHECK(users.register_user("bob", "1234567") == RegisterResult::Invalid);
    CHECK(users.register_user("bob", "12345678") == RegisterResult::Created);
    CHECK(users.verify("alice", "password1"));
    CHECK_FALSE(users.verify("alice", "password2"));
    CHECK_FALSE(users.verify("carol", "password1"));
    CHECK(users.size() == 3);
  }
  UserStore reloaded(file, kFast);
  CHECK(reloaded.size() == 3);
  CHECK(reloaded.verify("alice", "password1"));
  CHECK(reloaded.verify("bob", "12345678"));
  CHECK_FALSE(reloaded.verify("bob", "password1"));
}

TEST_CASE("users: the same password gets different salts") {
  TempDir dir;
  UserStore users(dir.path / "users.jsonl", kFast);
  users.register_user("u1", "same-password");
  users.register_user("u2", "same-password");
  std::ifstream in(dir.path / "users.jsonl");
  std::string l1, l2;
  std::getline(in, l1);
  std::getline(in, l2);
  auto j1 = json::parse(l1), j2 = json::parse(l2);
  CHECK(j1["salt"] != j2["salt"]);
  CHECK(j1["hash"] != j2["hash"]);
}

TEST_CASE("tokens: issue, validate, expire at ttl") {
  auto now = std::make_shared<std::atomic<std::int64_t>>(1000);
  TokenStore tokens(std::chrono::seconds(60), [now] { return SystemClock::time_point(std::chrono::seconds(now->load())); });
  const auto t = tokens.issue("alice");
  CHECK(t.size() == 64);
  CHECK(tokens.issue("alice") != t);
  CHECK(tokens.validate(t) == std::optional<std::string>("alice"));
  CHECK_FALSE(tokens.validate("nope"));
  *now = 1059;
  CHECK(tokens.validate(t).has_value());
  *now = 1060;
  CHECK_FALSE(tokens.validate(t).has_value());
  *now = 0;
  CHECK_FALSE(tokens.validate(t).has_value());
}

TEST_CASE("events: dedup, filter, newest first, paging") {
  TempDir dir;
  EventStore store(dir.path / "events.jsonl");
  for (int i = 0; i < 7; ++i)
    store.add(event("e" + std::to_string(i), i % 3 == 0 ? EventKind::Fire : EventKind::Motion, i < 4 ? "r1" : "r2",
                    static_cast<std::uint64_t>(i)));
  store.add(event("e0", EventKind::Motion, "r9", 99));
  CHECK(store.size() == 7);

  auto all = store.query({});
  REQUIRE(all.total == 7);
  CHECK(all.events.front().event_id == "e6");
  CHECK(all.events.back().event_id == "e0");
  CHECK(all.events.back().kind == EventKind::Fire);

  auto fire = store.query({EventKind::Fire, std::nullopt, 1, 50});
  CHECK(fire.total == 3);
  for (const auto& e : fire.events) CHECK(e.kind == EventKind::Fire);

  auto r1_motion = store.query({EventKind::Motion, std::string("r1"), 1, 50});
  REQUIRE(r1_motion.total == 2);
  CHECK(r1_motion.events[0].event_id == "e2");
  CHECK(r1_motion.events[1].event_id == "e1");

  auto p2 = store.query({std::nullopt, std::nullopt, 2, 3});
  CHECK(p2.total == 7);
  REQUIRE(p2.events.size() == 3);
  CHECK(p2.events[0].event_id == "e3");
  auto p3 = store.query({std::nullopt, std::nullopt, 3, 3});
  CHECK(p3.events.size() == 1);
  CHECK(store.query({std::nullopt, std::nullopt, 4, 3}).events.empty());
}

TEST_CASE("events: clip links survive reload, including links that arrive first") {
  TempDir dir;
  const auto file = dir.path / "events.jsonl";
  {
    EventStore store(file);
    store.add(event("a", EventKind::Motion, "r1", 1));
    auto linked = store.link_clip("a", std::string(64, 'a'));
    REQUIRE(linked);
    CHECK(linked->clip_id == std::string(64, 'a'));
    CHECK_FALSE(store.link_clip("b", std::string(64, 'b')).has_value());
    store.add(event("b", EventKind::Motion, "r1", 2));
    CHECK(store.all()[1].clip_id == std::string(64, 'b'));
  }
  EventStore reloaded(file);
  auto all = reloaded.all();
  REQUIRE(all.size() == 2);
  CHECK(all[0].clip_id == std::string(64, 'a'));
  CHECK(all[1].clip_id == std::string(64, 'b'));
  auto j = to_json(all[0]);
  CHECK(j["kind"] == "Motion");
  CHECK(j["clip_id"] == std::string(64, 'a'));
  CHECK(j["stream_link"] == "/api/robots/r1/stream");
}

TEST_CASE("events: a corrupt line is skipped") {
  TempDir dir;
  const auto file = dir.path / "events.jsonl";
  {
    EventStore store(file);
    store.add(event("a", EventKind::Fire, "r1", 1));
  }
  {
    std::ofstream out(file, std::ios::app);
    out << "{not json\n";
  }
  {
    EventStore store(file);
    store.add(event("b", EventKind::Fire, "r1", 2));
  }
  EventStore reloaded(file);
  CHECK(reloaded.size() == 2);
}

TEST_CASE("clips: content addressed, idempotent, reloadable") {
  TempDir dir;
  std::vector<vision::Frame> frames;
  for (int i = 0; i < 3; ++i) frames.emplace_back(8, 8, static_cast<std::uint8_t>(i * 40), i, i * 100);
  const auto container = vision::encode_clip(frames);
  const auto sha = to_hex(crypto::sha256(container));
  {
    ClipStore clips(dir.path / "clips");
    auto info = clips.put(container, "r1", "e1", 5);
    CHECK(info.clip_id == sha);
    CHECK(info.frame_count == 3);
    CHECK(info.size == container.size());
    clips.put(container, "r1", "e1", 5);
    CHECK(clips.all().size() == 1);
    CHECK(clips.get(sha) == std::optional<Bytes>(container));
    CHECK_FALSE(clips.get(std::string(64, '0')).has_value());
    CHECK_FALSE(clips.get("../../etc/passwd").has_value());
    CHECK_FALSE(clips.get(std::string(64, 'A')).has_value());
  }
  ClipStore reloaded(dir.path / "clips");
  REQUIRE(reloaded.all().size() == 1);
  CHECK(reloaded.info(sha)->event_id == "e1");
  CHECK(vision::decode_clip(*reloaded.get(sha)) == frames);
}

TEST_CASE("drop-oldest queue: keeps the newest items and never blocks the producer") {
  DropOldestQueue<int> q(4);
  for (int i = 0; i < 10; ++i) q.push(i);
  CHECK(q.size() == 4);
  CHECK(q.dropped() == 6);
  CHECK(q.pushed() == 10);
  for (int want = 6; want < 10; ++want) CHECK(q.pop_for(std::chrono::milliseconds(0)) == std::optional<int>(want));
  CHECK_FALSE(q.pop_for(std::chrono::milliseconds(1)).has_value());
}

TEST_CASE("drop-oldest queue: close wakes a waiting consumer and rejects pushes") {
  DropOldestQueue<int> q(2);
  std::thread t([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    q.close();
  });
  const auto start = std::chrono::steady_clock::now();
  CHECK_FALSE(q.pop_for(std::chrono::seconds(5)).has_value());
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(2));
  t.join();
  q.push(1);
  CHECK(q.size() == 0);
  CHECK(q.closed());
}

TEST_CASE("drop-oldest queue: concurrent producer, bounded loss accounting") {
  DropOldestQueue<int> q(8);
  std::atomic<bool> done{false};
  std::uint64_t consumed = 0;
  int last = -1;
  bool ordered = true;
  std::thread consumer([&] {
    while (!done || q.size() > 0) {
      if (auto v = q.pop_for(std::chrono::milliseconds(1))) {
        ordered = ordered && *v > last;
        last = *v;
        ++consumed;
      }
    }
  });
  for (int i = 0; i < 20000; ++i) q.push(i);
  done = true;
  consumer.join();
  CHECK(ordered);
  CHECK(consumed + q.dropped() == 20000);
}
