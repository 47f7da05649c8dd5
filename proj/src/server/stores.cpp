#include "sentinel/stores.hpp"

#include <algorithm>
#include <fstream>

#include "sentinel/log.hpp"

namespace sentinel::server {

namespace fs = std::filesystem;

std::int64_t unix_ms(SystemClock::time_point t) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

namespace {

constexpr std::size_t kSaltSize = 16;
constexpr std::size_t kHashSize = 32;

template <class F>
void read_lines(const fs::path& file, F&& each) {
  std::ifstream in(file);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      each(json::parse(line));
    } catch (const std::exception& e) {
      log::warn("skipping unreadable line", {{"file", file.string()}, {"line", n}, {"error", e.what()}});
    }
  }
}

void append_json_line(const fs::path& file, const json& j) {
  if (file.empty()) return;
  std::ofstream out(file, std::ios::app);
  out << j.dump() << '\n';
  out.flush();
  if (!out) throw StoreError("cannot append to " + file.string());
}

void ensure_parent(const fs::path& file) {
  if (!file.empty() && file.has_parent_path()) fs::create_directories(file.parent_path());
}

bool valid_username(const std::string& u) {
  if (u.empty() || u.size() > 64) return false;
  return std::all_of(u.begin(), u.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '.' ||
           c == '-';
  });
}

}  // namespace

// --- users -----------------------------------------------------------------

UserStore::UserStore(fs::path file, crypto::ScryptParams params, ClockFn clock)
    : file_(std::move(file)), params_(params), clock_(std::move(clock)) {
  dummy_salt_ = Bytes(kSaltSize);
  crypto::fill_random(dummy_salt_);
  ensure_parent(file_);
  if (file_.empty()) return;
  read_lines(file_, [&](const json& j) {
    Account a;
    a.username = j.at("username").get<std::string>();
    a.salt = from_hex(j.at("salt").get<std::string>());
    a.hash = from_hex(j.at("hash").get<std::string>());
    a.params = {j.at("n").get<std::uint64_t>(), j.at("r").get<std::uint64_t>(), j.at("p").get<std::uint64_t>()};
    a.created_at_ms = j.value("created_at", std::int64_t{0});
    accounts_.emplace(a.username, std::move(a));
  });
}

RegisterResult UserStore::register_user(const std::string& username, const std::string& password, std::string* why) {
  auto fail = [&](const char* reason) {
    if (why) *why = reason;
    return RegisterResult::Invalid;
  };
  if (!valid_username(username)) return fail("username must be 1-64 characters of [A-Za-z0-9_.-]");
  if (password.size() < 8) return fail("password must be at least 8 characters");

  Account a;
  a.username = username;
  a.salt = Bytes(kSaltSize);
  crypto::fill_random(a.salt);
  a.params = params_;
  a.hash = crypto::scrypt(password, a.salt, params_, kHashSize);
  a.created_at_ms = unix_ms(clock_());

  std::lock_guard lk(mu_);
  if (accounts_.count(username)) {
    if (why) *why = "username already taken";
    return RegisterResult::Duplicate;
  }
  append_json_line(file_, {{"username", a.username},
                           {"salt", to_hex(a.salt)},
                           {"hash", to_hex(a.hash)},
                           {"n", a.params.n},
                           {"r", a.params.r},
                           {"p", a.params.p},
                           {"created_at", a.created_at_ms}});
  accounts_.emplace(username, std::move(a));
  return RegisterResult::Created;
}

bool UserStore::verify(const std::string& username, const std::string& password) const {
  std::optional<Account> account;
  {
    std::lock_guard lk(mu_);
    if (auto it = accounts_.find(username); it != accounts_.end()) account = it->second;
  }
  if (!account) {
    // Same work for unknown users so timing does not reveal which names exist.
    (void)crypto::scrypt(password, dummy_salt_, params_, kHashSize);
    return false;
  }
  return crypto::equal_ct(crypto::scrypt(password, account->salt, account->params, kHashSize), account->hash);
}

bool UserStore::exists(const std::string& username) const {
  std::lock_guard lk(mu_);
  return accounts_.count(username) != 0;
}

std::size_t UserStore::size() const {
  std::lock_guard lk(mu_);
  return accounts_.size();
}

// --- tokens ----------------------------------------------------------------

TokenStore::TokenStore(std::chrono::seconds ttl, ClockFn clock) : ttl_(ttl), clock_(std::move(clock)) {}

std::string TokenStore::issue(const std::string& username) {
  auto token = to_hex(crypto::random_array<32>());
  std::lock_guard lk(mu_);
  sessions_[token] = {username, clock_() + ttl_};
  return token;
}

std::optional<std::string> TokenStore::validate(const std::string& token) {
  std::lock_guard lk(mu_);
  auto it = sessions_.find(token);
  if (it == sessions_.end()) return std::nullopt;
  if (clock_() >= it->second.expires) {
    sessions_.erase(it);
    return std::nullopt;
  }
  return it->second.username;
}

// --- events ----------------------------------------------------------------

std::string_view to_string(EventKind k) { return k == EventKind::Motion ? "Motion" : "Fire"; }

std::optional<EventKind> parse_event_kind(std::string_view s) {
  if (s == "Motion") return EventKind::Motion;
  if (s == "Fire") return EventKind::Fire;
  return std::nullopt;
}

json to_json(const EventRecord& e) {
  return {{"event_id", e.event_id},
          {"robot_id", e.robot_id},
          {"kind", to_string(e.kind)},
          {"seq", e.seq},
          {"timestamp_ms", e.timestamp_ms},
          {"received_at_ms", e.received_at_ms},
          {"details", e.details},
          {"clip_id", e.clip_id ? json(*e.clip_id) : json(nullptr)},
          {"stream_link", e.stream_link}};
}

namespace {

EventRecord event_from_json(const json& j) {
  EventRecord e;
  e.event_id = j.at("event_id").get<std::string>();
  e.robot_id = j.at("robot_id").get<std::string>();
  auto kind = parse_event_kind(j.at("kind").get<std::string>());
  if (!kind) throw StoreError("bad event kind");
  e.kind = *kind;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
  e.received_at_ms = j.at("received_at_ms").get<std::int64_t>();
  e.details = j.at("details");
  if (j.contains("clip_id") && j["clip_id"].is_string()) e.clip_id = j["clip_id"].get<std::string>();
  e.stream_link = j.at("stream_link").get<std::string>();
  return e;
}

}  // namespace

EventStore::EventStore(fs::path file) : file_(std::move(file)) {
  ensure_parent(file_);
  if (file_.empty()) return;
  read_lines(file_, [&](const json& j) {
    if (j.value("type", "") == "clip_link") {
      const auto event_id = j.at("event_id").get<std::string>();
      const auto clip_id = j.at("clip_id").get<std::string>();
      if (auto it = by_id_.find(event_id); it != by_id_.end()) {
        events_[it->second].clip_id = clip_id;
      } else {
        pending_links_[event_id] = clip_id;
      }
      return;
    }
    auto e = event_from_json(j);
    if (by_id_.count(e.event_id)) return;
    if (auto p = pending_links_.find(e.event_id); p != pending_links_.end()) {
      e.clip_id = p->second;
      pending_links_.erase(p);
    }
    by_id_[e.event_id] = events_.size();
    events_.push_back(std::move(e));
  });
}

void EventStore::append_line(const json& j) { append_json_line(file_, j); }

void EventStore::add(const EventRecord& in) {
  std::lock_guard lk(mu_);
  if (by_id_.count(in.event_id)) return;
  EventRecord e = in;
  append_line(to_json(e));
  if (auto p = pending_links_.find(e.event_id); p != pending_links_.end()) {
    e.clip_id = p->second;
    pending_links_.erase(p);
  }
  by_id_[e.event_id] = events_.size();
  events_.push_back(std::move(e));
}

std::optional<EventRecord> EventStore::link_clip(const std::string& event_id, const std::string& clip_id) {
  std::lock_guard lk(mu_);
  append_line({{"type", "clip_link"}, {"event_id", event_id}, {"clip_id", clip_id}});
  auto it = by_id_.find(event_id);
  if (it == by_id_.end()) {
    pending_links_[event_id] = clip_id;
    return std::nullopt;
  }
  events_[it->second].clip_id = clip_id;
  return events_[it->second];
}

EventPage EventStore::query(const EventQuery& q) const {
  std::lock_guard lk(mu_);
  std::vector<const EventRecord*> hits;
  for (auto it = events_.rbegin(); it != events_.rend(); ++it) {
    if (q.kind && it->kind != *q.kind) continue;
    if (q.robot_id && it->robot_id != *q.robot_id) continue;
    hits.push_back(&*it);
  }
  EventPage page;
  page.total = hits.size();
  const std::size_t size = std::max<std::size_t>(q.page_size, 1);
  const std::size_t start = (std::max<std::size_t>(q.page, 1) - 1) * size;
  for (std::size_t i = start; i < hits.size() && i < start + size; ++i) page.events.push_back(*hits[i]);
  return page;
}

std::vector<EventRecord> EventStore::all() const {
  std::lock_guard lk(mu_);
  return events_;
}

std::size_t EventStore::size() const {
  std::lock_guard lk(mu_);
  return events_.size();
}

// --- clips -----------------------------------------------------------------

namespace {

json clip_json(const ClipInfo& c) {
  return {{"clip_id", c.clip_id}, {"robot_id", c.robot_id}, {"event_id", c.event_id},
          {"seq", c.seq},         {"size", c.size},         {"frame_count", c.frame_count}};
}

bool is_hex_digest(const std::string& s) {
  return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

}  // namespace

ClipStore::ClipStore(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  read_lines(dir_ / "index.jsonl", [&](const json& j) {
    ClipInfo c;
    c.clip_id = j.at("clip_id").get<std::string>();
    c.robot_id = j.at("robot_id").get<std::string>();
    c.event_id = j.at("event_id").get<std::string>();
    c.seq = j.at("seq").get<std::uint64_t>();
    c.size = j.at("size").get<std::size_t>();
    c.frame_count = j.at("frame_count").get<std::size_t>();
    if (!fs::exists(dir_ / (c.clip_id + ".svc1"))) {
      log::warn("clip index entry without file", {{"clip_id", c.clip_id}});
      return;
    }
    if (index_.emplace(c.clip_id, c).second) order_.push_back(c);
  });
}

ClipInfo ClipStore::put(ByteView container, const std::string& robot_id, const std::string& event_id,
                        std::uint64_t seq) {
  ClipInfo c;
  c.clip_id = to_hex(crypto::sha256(container));
  c.robot_id = robot_id;
  c.event_id = event_id;
  c.seq = seq;
  c.size = container.size();
  c.frame_count = container.size() >= 12 ? Reader(container.subspan(8, 4)).u32() : 0;

  std::lock_guard lk(mu_);
  if (auto it = index_.find(c.clip_id); it != index_.end()) return it->second;
  const auto path = dir_ / (c.clip_id + ".svc1");
  const auto tmp = dir_ / (c.clip_id + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(container.data()), static_cast<std::streamsize>(container.size()));
    out.flush();
    if (!out) throw StoreError("cannot write clip " + tmp.string());
  }
  fs::rename(tmp, path);
  append_json_line(dir_ / "index.jsonl", clip_json(c));
  index_.emplace(c.clip_id, c);
  order_.push_back(c);
  return c;
}

std::optional<Bytes> ClipStore::get(const std::string& clip_id) const {
  if (!is_hex_digest(clip_id)) return std::nullopt;
  {
    std::lock_guard lk(mu_);
    if (!index_.count(clip_id)) return std::nullopt;
  }
  std::ifstream in(dir_ / (clip_id + ".svc1"), std::ios::binary);
  if (!in) return std::nullopt;
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::optional<ClipInfo> ClipStore::info(const std::string& clip_id) const {
  std::lock_guard lk(mu_);
  if (auto it = index_.find(clip_id); it != index_.end()) return it->second;
  return std::nullopt;
}

std::vector<ClipInfo> ClipStore::all() const {
  std::lock_guard lk(mu_);
  return order_;
}

}  // namespace sentinel::server
