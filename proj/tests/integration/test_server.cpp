#include <doctest.h>

#include <fstream>
#include <set>

#include "harness.hpp"
#include "sentinel/vision.hpp"

using namespace harness;

namespace {

const char* kRoom = R"({"width":16,"height":16,"seed":3,"robot":{"x":3,"y":3,"heading":"E"},"obstacles":[[3,1]]})";

// Intruder crosses the camera's view twice; two fires flank the robot from tick 40.
const char* kIntruderAndFire = R"({"width":16,"height":16,"seed":3,"robot":{"x":3,"y":8,"heading":"N"},
  "intruders":[{"id":"p","path":[[1,6],[2,6],[3,6],[4,6],[5,6]],"active_from":30,"active_until":34}],
  "fires":[{"cell":[2,8],"ignition_tick":40},{"cell":[4,8],"ignition_tick":40}]})";

bool robot_connected(TestServer& s, const std::string& id) {
  for (const auto& r : s.srv->robots())
    if (r.robot_id == id) return r.connected;
  return false;
}

}  // namespace

TEST_CASE("auth: every API route except register/login rejects missing or bad tokens") {
  TestServer s({});
  auto api = s.api();
  const std::string rid = "00000000-0000-8000-8000-000000000000";
  const std::vector<std::pair<std::string, std::string>> routes{
      {"GET", "/api/robots"},
      {"POST", "/api/robots/" + rid + "/commands"},
      {"GET", "/api/events"},
      {"GET", "/api/clips/abc"},
      {"GET", "/api/robots/" + rid + "/stream"},
      {"GET", "/api/notifications"},
      {"GET", "/api/nonexistent"},
  };
  for (const auto& [method, path] : routes) {
    CAPTURE(path);
    CHECK(api.request(method, path, msg::json::object()).status == 401);
    CHECK(api.request(method, path, msg::json::object(), "deadbeef").status == 401);
  }
}

TEST_CASE("auth: register, login, duplicate, wrong password") {
  TestServer s({});
  auto api = s.api();
  CHECK(api.post("/api/register", {{"username", "alice"}, {"password", "s3cret-pass"}}).status == 201);
  CHECK(api.post("/api/register", {{"username", "alice"}, {"password", "another-pass"}}).status == 409);
  CHECK(api.post("/api/register", {{"username", "bob"}, {"password", "short"}}).status == 400);
  CHECK(api.post("/api/register", {{"username", "bad name"}, {"password", "long enough"}}).status == 400);
  CHECK(api.post("/api/register", msg::json::array()).status == 400);
  CHECK(api.get("/api/register").status == 405);

  auto bad = api.post("/api/login", {{"username", "alice"}, {"password", "wrong-pass"}});
  CHECK(bad.status == 401);
  CHECK_FALSE(bad.json_body().contains("token"));
  CHECK(api.post("/api/login", {{"username", "nobody"}, {"password", "whatever1"}}).status == 401);

  auto ok = api.post("/api/login", {{"username", "alice"}, {"password", "s3cret-pass"}});
  REQUIRE(ok.status == 200);
  const auto token = ok.json_body()["token"].get<std::string>();
  CHECK(token.size() == 64);
  CHECK(api.get("/api/robots", token).status == 200);

  // Plaintext never hits the disk.
  std::ifstream in(s.dir.path / "users.jsonl");
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(all.find("s3cret-pass") == std::string::npos);
  CHECK(all.find("alice") != std::string::npos);
}

TEST_CASE("auth: tokens expire") {
  auto now = std::make_shared<std::atomic<std::int64_t>>(0);
  TestServer s({}, [&](server::ServerConfig& c) {
    c.token_ttl = std::chrono::hours(24);
    c.clock = [now] { return server::SystemClock::time_point(std::chrono::seconds(now->load())); };
  });
  auto token = s.login();
  auto api = s.api();
  CHECK(api.get("/api/robots", token).status == 200);
  *now = 24 * 3600 - 1;
  CHECK(api.get("/api/robots", token).status == 200);
  *now = 24 * 3600;
  CHECK(api.get("/api/robots", token).status == 401);
}

TEST_CASE("robots: allowlisted robot registers, steering works, offline is 409") {
  auto rk = key("r1");
  TestServer s({rk.pub});
  auto token = s.login();
  auto api = s.api();
  TestRobot r("r1", kRoom, s.robots(), s.keys.pub);
  REQUIRE(eventually([&] { return robot_connected(s, r.id()); }));

  auto list = api.get("/api/robots", token).json_body();
  REQUIRE(list.size() == 1);
  CHECK(list[0]["robot_id"] == r.id());
  CHECK(list[0]["connected"] == true);
  CHECK(list[0]["stream_link"] == "/api/robots/" + r.id() + "/stream");
  REQUIRE(eventually([&] { return api.get("/api/robots", token).json_body()[0]["mode"] == "Idle"; }));

  client::WsSubscription notes(s.http(), "/api/notifications", token);
  const auto cid = new_command_id();
  auto res = api.post("/api/robots/" + r.id() + "/commands",
                      {{"kind", "Move"}, {"direction", "Forward"}, {"command_id", cid}}, token);
  CHECK(res.status == 202);
  CHECK(res.json_body()["command_id"] == cid);
  CHECK(eventually([&] { return r.snap().pose == world::RobotPose{4, 3, world::Heading::E}; }));
  auto note = notes.next(5s);
  REQUIRE(note);
  auto nj = msg::json::parse(to_string(note->data));
  CHECK(nj["type"] == "command_result");
  CHECK(nj["command_id"] == cid);
  CHECK(nj["result"] == "ack");

  // Server fills in a command_id when the caller omits it.
  res = api.post("/api/robots/" + r.id() + "/commands", {{"kind", "Move"}, {"direction", "TurnLeft"}}, token);
  CHECK(res.status == 202);
  CHECK(channel::parse_uuid(res.json_body()["command_id"].get<std::string>()).has_value());
  CHECK(eventually([&] { return r.snap().pose.heading == world::Heading::N; }));

  CHECK(api.post("/api/robots/" + r.id() + "/commands", {{"kind", "Fly"}}, token).status == 400);
  CHECK(api.post("/api/robots/" + r.id() + "/commands", {{"kind", "Move"}}, token).status == 400);
  CHECK(api.post("/api/robots/11111111-1111-8111-8111-111111111111/commands", {{"kind", "Stop"}}, token).status ==
        404);

  r.stop();
  REQUIRE(eventually([&] { return !robot_connected(s, r.id()); }));
  CHECK(api.post("/api/robots/" + r.id() + "/commands", {{"kind", "Stop"}}, token).status == 409);
}

TEST_CASE("robots: blocked move is relayed as an error notification") {
  auto rk = key("r1");
  TestServer s({rk.pub});
  auto token = s.login();
  TestRobot r("r1", R"({"width":8,"height":8,"seed":1,"robot":{"x":7,"y":0,"heading":"E"}})", s.robots(), s.keys.pub);
  REQUIRE(eventually([&] { return robot_connected(s, r.id()); }));
  client::WsSubscription notes(s.http(), "/api/notifications", token);
  const auto cid = new_command_id();
  CHECK(s.api().post("/api/robots/" + r.id() + "/commands",
                     {{"kind", "Move"}, {"direction", "Forward"}, {"command_id", cid}}, token)
            .status == 202);
  auto note = notes.next(5s);
  REQUIRE(note);
  auto nj = msg::json::parse(to_string(note->data));
  CHECK(nj["result"] == "error");
  CHECK(nj["body"]["reason"] == "Blocked");
  CHECK(r.snap().pose == world::RobotPose{7, 0, world::Heading::E});
}

TEST_CASE("robots: non-allowlisted key is rejected and nothing is registered") {
  TestServer s({key("someone-else").pub});
  TestRobot r("intruder-bot", kRoom, s.robots(), s.keys.pub);
  std::this_thread::sleep_for(300ms);
  CHECK_FALSE(r.snap().connected);
  for (const auto& info : s.srv->robots()) CHECK(info.robot_id != r.id());
}

TEST_CASE("robots: a second handshake from the same robot evicts the first session") {
  auto rk = key("twin");
  TestServer s({rk.pub});
  TestRobot a("twin", kRoom, s.robots(), s.keys.pub);
  REQUIRE(eventually([&] { return robot_connected(s, a.id()); }));
  TestRobot b("twin", kRoom, s.robots(), s.keys.pub);
  REQUIRE(eventually([&] { return b.snap().sessions >= 1; }));
  auto list = s.srv->robots();
  REQUIRE(list.size() == 1);
  CHECK(list[0].sessions >= 2);
  a.stop();
  b.stop();
}

TEST_CASE("motion and fire: events persisted, clip linked, clip bytes identical, filters work") {
  auto rk = key("r2");
  TestServer s({rk.pub});
  auto token = s.login();
  auto api = s.api();
  TestRobot r("r2", kIntruderAndFire, s.robots(), s.keys.pub);
  REQUIRE(eventually([&] { return robot_connected(s, r.id()); }));
  client::WsSubscription notes(s.http(), "/api/notifications", token);
  CHECK(api.post("/api/robots/" + r.id() + "/commands", {{"kind", "StartMotionDetection"}}, token).status == 202);

  REQUIRE(eventually([&] {
    auto snap = r.snap();
    return snap.stats.clips == 1 && snap.stats.fire_alerts == 1 && snap.journal_size == 0;
  }));
  auto snap = r.snap();
  CHECK(snap.stats.motion_events == 1);

  auto all = api.get("/api/events", token).json_body();
  CHECK(all["total"] == 2);
  auto fire = api.get("/api/events?kind=Fire", token).json_body();
  REQUIRE(fire["events"].size() == 1);
  CHECK(fire["events"][0]["kind"] == "Fire");
  CHECK(fire["events"][0]["stream_link"] == "/api/robots/" + r.id() + "/stream");
  auto motion = api.get("/api/events?kind=Motion&robot=" + r.id(), token).json_body();
  REQUIRE(motion["events"].size() == 1);
  auto clip_id = motion["events"][0]["clip_id"];
  REQUIRE(clip_id.is_string());
  CHECK(clip_id == snap.stats.clip_sha256.at(0));
  CHECK(api.get("/api/events?kind=Smoke", token).status == 400);
  CHECK(api.get("/api/events?page=0", token).status == 400);
  CHECK(api.get("/api/events?page=2", token).json_body()["events"].empty());

  auto clip = api.get("/api/clips/" + clip_id.get<std::string>(), token);
  REQUIRE(clip.status == 200);
  CHECK(to_hex(crypto::sha256(to_bytes(clip.body))) == snap.stats.clip_sha256.at(0));
  auto frames = vision::decode_clip(to_bytes(clip.body));
  CHECK(frames.size() == 21);
  CHECK(api.get("/api/clips/" + std::string(64, '0'), token).status == 404);

  std::set<std::string> seen_types;
  while (auto m = notes.next(500ms)) seen_types.insert(msg::json::parse(to_string(m->data))["type"].get<std::string>());
  CHECK(seen_types.count("event"));
  CHECK(seen_types.count("event_updated"));
}

TEST_CASE("streaming: subscribers receive frames; idle robot sends none") {
  auto rk = key("r3");
  TestServer s({rk.pub});
  auto token = s.login();
  auto api = s.api();
  TestRobot r("r3", kRoom, s.robots(), s.keys.pub);
  REQUIRE(eventually([&] { return robot_connected(s, r.id()); }));
  client::WsSubscription a(s.http(), "/api/robots/" + r.id() + "/stream", token);
  client::WsSubscription b(s.http(), "/api/robots/" + r.id() + "/stream", token);
  CHECK_FALSE(a.next(300ms).has_value());

  CHECK(api.post("/api/robots/" + r.id() + "/commands", {{"kind", "StartStreaming"}}, token).status == 202);
  auto m = a.next(3s);
  REQUIRE(m);
  CHECK(m->binary);
  auto f = msg::decode_frame_message(m->data);
  CHECK(f.width == 32);
  CHECK(f.height == 32);
  CHECK(b.next(3s).has_value());

  CHECK(api.get("/api/robots/" + r.id() + "/stream", token).status == 426);
  CHECK(api.get("/api/robots/11111111-1111-8111-8111-111111111111/stream", token).status == 404);
}

TEST_CASE("journal: events raised offline arrive after reconnect, once") {
  auto rk = key("r4");
  TestServer s({rk.pub});
  auto token = s.login();
  TestRobot r("r4", kIntruderAndFire, s.robots(), s.keys.pub);
  REQUIRE(eventually([&] { return robot_connected(s, r.id()); }));
  CHECK(s.api().post("/api/robots/" + r.id() + "/commands", {{"kind", "StartMotionDetection"}}, token).status == 202);
  REQUIRE(eventually([&] { return r.snap().mode == agent::Mode::MotionDetection; }));
  r.runtime->set_network_enabled(false);
  REQUIRE(eventually([&] { return r.snap().stats.clips == 1 && r.snap().stats.fire_alerts == 1; }));
  CHECK(r.snap().journal_size >= 3);
  CHECK(s.srv->events().size() == 0);
  r.runtime->set_network_enabled(true);
  REQUIRE(eventually([&] { return r.snap().journal_size == 0; }));
  CHECK(s.srv->events().size() == 2);
  CHECK(s.srv->clips().all().size() == 1);
}
