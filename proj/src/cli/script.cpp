#include "sentinel/script.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "sentinel/cli.hpp"
#include "sentinel/client.hpp"
#include "sentinel/messages.hpp"
#include "sentinel/vision.hpp"

namespace sentinel::cli {

namespace {

using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

struct OpSpec {
  std::set<std::string> required;
  std::set<std::string> optional;
};

const std::map<std::string, OpSpec>& op_specs() {
  static const std::map<std::string, OpSpec> specs{
      {"register", {{"username", "password"}, {"expect_status"}}},
      {"login", {{"username", "password"}, {"expect_status"}}},
      {"wait_robots", {{}, {"count", "timeout_ms"}}},
      {"command", {{"robot", "command"}, {"expect_status", "expect_result", "timeout_ms"}}},
      {"wait_status", {{"robot"}, {"mode", "pose", "connected", "timeout_ms"}}},
      {"expect_pose", {{"robot", "pose"}, {"timeout_ms"}}},
      {"events", {{}, {"robot", "kind", "count", "min_count", "with_clips", "timeout_ms"}}},
      {"expect_notification", {{"type"}, {"kind", "result", "reason", "count", "timeout_ms"}}},
      {"subscribe_stream", {{"robot"}, {"frames", "timeout_ms"}}},
      {"get_clip", {{}, {"robot", "index", "frames", "save", "timeout_ms"}}},
      {"request", {{"method", "path"}, {"body", "auth", "expect_status"}}},
      {"sleep", {{"ms"}, {}}},
  };
  return specs;
}

const json& ops_of(const json& script) {
  if (script.is_object() && script.contains("ops")) return script.at("ops");
  return script;
}

class Failure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Runner {
 public:
  explicit Runner(const net::HostPort& server) : api_(server), server_(server) {}

  json run(const json& op) {
    const auto name = op.at("op").get<std::string>();
    if (name == "register") return do_register(op);
    if (name == "login") return do_login(op);
    if (name == "wait_robots") return do_wait_robots(op);
    if (name == "command") return do_command(op);
    if (name == "wait_status" || name == "expect_pose") return do_wait_status(op);
    if (name == "events") return do_events(op);
    if (name == "expect_notification") return do_expect_notification(op);
    if (name == "subscribe_stream") return do_subscribe_stream(op);
    if (name == "get_clip") return do_get_clip(op);
    if (name == "request") return do_request(op);
    std::this_thread::sleep_for(std::chrono::milliseconds(op.at("ms").get<int>()));
    return json::object();
  }

 private:
  static std::chrono::milliseconds timeout(const json& op, int fallback_ms = 10000) {
    return std::chrono::milliseconds(op.value("timeout_ms", fallback_ms));
  }

  static void expect_status(const json& op, const client::HttpResult& res, int fallback) {
    const int want = op.value("expect_status", fallback);
    if (res.status != want)
      throw Failure("HTTP " + std::to_string(res.status) + " (expected " + std::to_string(want) + "): " + res.body);
  }

  std::string robot(const json& ref) const {
    if (ref.is_string()) return ref.get<std::string>();
    const auto i = ref.get<std::size_t>();
    if (i >= robots_.size()) throw Failure("robot index " + std::to_string(i) + " not known; run wait_robots first");
    return robots_[i];
  }

  void need_token() const {
    if (token_.empty()) throw Failure("not logged in");
  }

  json do_register(const json& op) {
    auto res = api_.post("/api/register", {{"username", op["username"]}, {"password", op["password"]}});
    expect_status(op, res, 201);
    return {{"status", res.status}};
  }

  json do_login(const json& op) {
    auto res = api_.post("/api/login", {{"username", op["username"]}, {"password", op["password"]}});
    expect_status(op, res, 200);
    if (res.status == 200) {
      token_ = res.json_body().value("token", "");
      notes_ = std::make_unique<client::WsSubscription>(server_, "/api/notifications", token_);
    }
    return {{"status", res.status}};
  }

  json do_wait_robots(const json& op) {
    need_token();
    const auto want = op.value("count", std::size_t{1});
    const auto deadline = Clock::now() + timeout(op);
    json list;
    for (;;) {
      list = api_.get("/api/robots", token_).json_body();
      std::size_t connected = 0;
      if (list.is_array())
        for (const auto& r : list) connected += r.value("connected", false) ? 1 : 0;
      if (connected >= want) break;
      if (Clock::now() > deadline) throw Failure("only " + std::to_string(connected) + " robots connected");
      std::this_thread::sleep_for(50ms);
    }
    robots_.clear();
    for (const auto& r : list)
      if (r.value("connected", false)) robots_.push_back(r["robot_id"].get<std::string>());
    return {{"robots", robots_}};
  }

  json do_command(const json& op) {
    need_token();
    const auto id = robot(op["robot"]);
    auto res = api_.post("/api/robots/" + id + "/commands", op["command"], token_);
    expect_status(op, res, 202);
    json out{{"status", res.status}};
    if (res.status != 202 || !op.contains("expect_result")) return out;
    const auto command_id = res.json_body().value("command_id", "");
    out["command_id"] = command_id;
    auto note = wait_note(
        [&](const json& n) { return n.value("type", "") == "command_result" && n.value("command_id", "") == command_id; },
        timeout(op));
    if (!note) throw Failure("no command_result for " + command_id);
    const auto want = op["expect_result"].get<std::string>();
    if (note->value("result", "") != want)
      throw Failure("command result " + note->value("result", "") + " (expected " + want + "): " + note->dump());
    out["result"] = *note;
    return out;
  }

  json do_wait_status(const json& op) {
    need_token();
    const auto id = robot(op["robot"]);
    const auto deadline = Clock::now() + timeout(op);
    json last;
    for (;;) {
      for (const auto& r : api_.get("/api/robots", token_).json_body())
        if (r.value("robot_id", "") == id) last = r;
      if (matches_status(op, last)) return {{"robot", last}};
      if (Clock::now() > deadline) throw Failure("status never matched; last: " + last.dump());
      std::this_thread::sleep_for(20ms);
    }
  }

  static bool matches_status(const json& op, const json& r) {
    if (r.is_null()) return false;
    if (op.contains("connected") && r.value("connected", false) != op["connected"].get<bool>()) return false;
    if (op.contains("mode") && r.value("mode", "") != op["mode"].get<std::string>()) return false;
    if (op.contains("pose")) {
      const auto& st = r["last_status"];
      if (!st.is_object() || !st.contains("pose")) return false;
      for (const auto& [k, v] : op["pose"].items())
        if (st["pose"].value(k, json()) != v) return false;
    }
    return true;
  }

  std::string event_query(const json& op) const {
    std::string q = "/api/events?page=1";
    if (op.contains("kind")) q += "&kind=" + op["kind"].get<std::string>();
    if (op.contains("robot")) q += "&robot=" + robot(op["robot"]);
    return q;
  }

  json do_events(const json& op) {
    need_token();
    const auto deadline = Clock::now() + timeout(op);
    const bool with_clips = op.value("with_clips", false);
    json body;
    for (;;) {
      auto res = api_.get(event_query(op), token_);
      expect_status(json::object(), res, 200);
      body = res.json_body();
      const auto total = body["total"].get<std::size_t>();
      bool ok = true;
      if (op.contains("count")) ok = total == op["count"].get<std::size_t>();
      if (op.contains("min_count")) ok = ok && total >= op["min_count"].get<std::size_t>();
      if (with_clips)
        for (const auto& e : body["events"])
          if (e["kind"] == "Motion" && !e.value("clip_id", json()).is_string()) ok = false;
      if (ok) return {{"total", total}, {"events", body["events"]}};
      if (Clock::now() > deadline) throw Failure("events never matched; last: " + body.dump());
      std::this_thread::sleep_for(50ms);
    }
  }

  std::optional<json> wait_note(const std::function<bool(const json&)>& pred, std::chrono::milliseconds wait) {
    const auto deadline = Clock::now() + wait;
    for (;;) {
      for (auto it = seen_.begin(); it != seen_.end(); ++it) {
        if (pred(*it)) {
          auto n = *it;
          seen_.erase(it);
          return n;
        }
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (left <= 0ms) return std::nullopt;
      if (auto m = notes_->next(left)) seen_.push_back(json::parse(m->data.begin(), m->data.end(), nullptr, false));
    }
  }

  json do_expect_notification(const json& op) {
    need_token();
    const auto count = op.value("count", 1);
    json got = json::array();
    for (int i = 0; i < count; ++i) {
      auto n = wait_note(
          [&](const json& n) {
            if (!n.is_object() || n.value("type", "") != op["type"].get<std::string>()) return false;
            if (op.contains("kind") && n.value("event", json::object()).value("kind", "") != op["kind"]) return false;
            if (op.contains("result") && n.value("result", "") != op["result"]) return false;
            if (op.contains("reason") && n.value("body", json::object()).value("reason", "") != op["reason"])
              return false;
            return true;
          },
          timeout(op));
      if (!n) throw Failure("expected notification " + op.dump() + " not received");
      got.push_back(*n);
    }
    return {{"notifications", got}};
  }

  json do_subscribe_stream(const json& op) {
    need_token();
    const auto id = robot(op["robot"]);
    const auto want = op.value("frames", 1);
    client::WsSubscription ws(server_, "/api/robots/" + id + "/stream", token_);
    const auto deadline = Clock::now() + timeout(op);
    std::int64_t last = -1;
    int got = 0;
    json sizes;
    while (got < want) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (left <= 0ms) throw Failure("received " + std::to_string(got) + " of " + std::to_string(want) + " frames");
      auto m = ws.next(left);
      if (!m) continue;
      if (!m->binary) throw Failure("stream sent a text message");
      auto f = msg::decode_frame_message(m->data);
      if (static_cast<std::int64_t>(f.frame_index) <= last) throw Failure("frame indices not increasing");
      last = static_cast<std::int64_t>(f.frame_index);
      sizes = {f.width, f.height};
      ++got;
    }
    return {{"frames", got}, {"last_frame_index", last}, {"size", sizes}};
  }

  json do_get_clip(const json& op) {
    need_token();
    json q = op;
    q["kind"] = "Motion";
    const auto index = op.value("index", std::size_t{0});
    const auto deadline = Clock::now() + timeout(op);
    std::string clip_id;
    for (;;) {
      auto events = api_.get(event_query(q), token_).json_body()["events"];
      std::vector<std::string> ids;
      for (const auto& e : events)
        if (e.value("clip_id", json()).is_string()) ids.push_back(e["clip_id"].get<std::string>());
      if (index < ids.size()) {
        clip_id = ids[index];
        break;
      }
      if (Clock::now() > deadline) throw Failure("no clip at index " + std::to_string(index));
      std::this_thread::sleep_for(50ms);
    }
    auto res = api_.get("/api/clips/" + clip_id, token_);
    expect_status(json::object(), res, 200);
    const Bytes data(res.body.begin(), res.body.end());
    const auto sha = to_hex(crypto::sha256(data));
    if (sha != clip_id) throw Failure("clip bytes hash to " + sha + ", not " + clip_id);
    const auto frames = vision::decode_clip(data);
    for (std::size_t i = 1; i < frames.size(); ++i)
      if (frames[i].frame_index != frames[i - 1].frame_index + 1) throw Failure("clip frames are not contiguous");
    if (op.contains("frames") && frames.size() != op["frames"].get<std::size_t>())
      throw Failure("clip has " + std::to_string(frames.size()) + " frames");
    if (op.contains("save")) {
      std::ofstream out(op["save"].get<std::string>(), std::ios::binary);
      out.write(res.body.data(), static_cast<std::streamsize>(res.body.size()));
    }
    return {{"clip_id", clip_id}, {"frames", frames.size()}, {"bytes", data.size()}};
  }

  json do_request(const json& op) {
    std::optional<json> body;
    if (op.contains("body")) body = op["body"];
    const bool auth = op.value("auth", true);
    auto res = api_.request(op["method"].get<std::string>(), op["path"].get<std::string>(), body,
                            auth ? token_ : std::string());
    expect_status(op, res, 200);
    return {{"status", res.status}, {"body", res.json_body()}};
  }

  client::ApiClient api_;
  net::HostPort server_;
  std::string token_;
  std::vector<std::string> robots_;
  std::unique_ptr<client::WsSubscription> notes_;
  std::vector<json> seen_;
};

}  // namespace

void check_script(const json& script) {
  const auto& ops = ops_of(script);
  if (!ops.is_array()) throw ConfigError("script must be a JSON array of ops or {\"ops\": [...]}");
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const auto& op = ops[i];
    const auto where = "op " + std::to_string(i);
    if (!op.is_object() || !op.contains("op") || !op["op"].is_string())
      throw ConfigError(where + ": expected an object with an \"op\" string");
    const auto it = op_specs().find(op["op"].get<std::string>());
    if (it == op_specs().end()) throw ConfigError(where + ": unknown op '" + op["op"].get<std::string>() + "'");
    for (const auto& k : it->second.required)
      if (!op.contains(k)) throw ConfigError(where + " (" + it->first + "): missing '" + k + "'");
    for (const auto& [k, v] : op.items())
      if (k != "op" && !it->second.required.count(k) && !it->second.optional.count(k))
        throw ConfigError(where + " (" + it->first + "): unknown field '" + k + "'");
    if (op.contains("robot") && !op["robot"].is_string() && !op["robot"].is_number_unsigned())
      throw ConfigError(where + ": robot must be an index or an id");
    if (op.contains("command") && !op["command"].is_object()) throw ConfigError(where + ": command must be an object");
  }
}

ScriptResult run_script(const json& script, const net::HostPort& server) {
  check_script(script);
  ScriptResult out;
  Runner runner(server);
  for (const auto& op : ops_of(script)) {
    json entry{{"op", op["op"]}};
    const auto start = Clock::now();
    try {
      entry["result"] = runner.run(op);
      entry["ok"] = true;
    } catch (const std::exception& e) {
      entry["ok"] = false;
      entry["error"] = e.what();
      out.ok = false;
    }
    entry["elapsed_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
    out.transcript.push_back(entry);
    if (!out.ok) break;
  }
  return out;
}

}  // namespace sentinel::cli
