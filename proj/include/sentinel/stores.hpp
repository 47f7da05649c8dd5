#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sentinel/bytes.hpp"
#include "sentinel/crypto.hpp"

namespace sentinel::server {

using json = nlohmann::json;
using SystemClock = std::chrono::system_clock;
using ClockFn = std::function<SystemClock::time_point()>;

std::int64_t unix_ms(SystemClock::time_point t);

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- users -----------------------------------------------------------------

enum class RegisterResult { Created, Duplicate, Invalid };

/// Accounts with salted scrypt hashes, persisted as JSON lines.
class UserStore {
 public:
  /// Empty path keeps accounts in memory only.
  explicit UserStore(std::filesystem::path file, crypto::ScryptParams params = {}, ClockFn clock = SystemClock::now);

  /// Usernames: 1-64 of [A-Za-z0-9_.-]. Passwords: at least 8 bytes.
  RegisterResult register_user(const std::string& username, const std::string& password, std::string* why = nullptr);
  bool verify(const std::string& username, const std::string& password) const;
  bool exists(const std::string& username) const;
  std::size_t size() const;

 private:
  struct Account {
    std::string username;
    Bytes salt;
    Bytes hash;
    crypto::ScryptParams params;
    std::int64_t created_at_ms = 0;
  };

  std::filesystem::path file_;
  crypto::ScryptParams params_;
  ClockFn clock_;
  mutable std::mutex mu_;
  std::map<std::string, Account> accounts_;
  Bytes dummy_salt_;
};

// --- tokens ----------------------------------------------------------------

class TokenStore {
 public:
  explicit TokenStore(std::chrono::seconds ttl = std::chrono::hours(24), ClockFn clock = SystemClock::now);

  /// 32 random bytes, hex encoded.
  std::string issue(const std::string& username);
  /// Username for a live token; expired tokens are forgotten.
  std::optional<std::string> validate(const std::string& token);

 private:
  struct Session {
    std::string username;
    SystemClock::time_point expires;
  };
  std::chrono::seconds ttl_;
  ClockFn clock_;
  std::mutex mu_;
  std::map<std::string, Session> sessions_;
};

// --- events ----------------------------------------------------------------

enum class EventKind { Motion, Fire };
std::string_view to_string(EventKind k);
std::optional<EventKind> parse_event_kind(std::string_view s);

struct EventRecord {
  std::string event_id;
  std::string robot_id;
  EventKind kind = EventKind::Motion;
  std::uint64_t seq = 0;  // robot journal seq
  std::int64_t timestamp_ms = 0;  // robot clock
  std::int64_t received_at_ms = 0;
  json details = json::object();
  std::optional<std::string> clip_id;
  std::string stream_link;
};

json to_json(const EventRecord& e);

struct EventQuery {
  std::optional<EventKind> kind;
  std::optional<std::string> robot_id;
  std::size_t page = 1;  // 1-based
  std::size_t page_size = 50;
};

struct EventPage {
  std::vector<EventRecord> events;  // newest first
  std::size_t total = 0;
};

/// Append-only JSON-lines event log. Clip links are separate lines applied on load.
class EventStore {
 public:
  explicit EventStore(std::filesystem::path file);

  void add(const EventRecord& e);
  /// Links a clip to its event; returns the updated record when the event exists.
  std::optional<EventRecord> link_clip(const std::string& event_id, const std::string& clip_id);
  EventPage query(const EventQuery& q) const;
  std::vector<EventRecord> all() const;
  std::size_t size() const;

 private:
  void append_line(const json& j);

  std::filesystem::path file_;
  mutable std::mutex mu_;
  std::vector<EventRecord> events_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::string> pending_links_;  // event_id -> clip_id
};

// --- clips -----------------------------------------------------------------

struct ClipInfo {
  std::string clip_id;  // SHA-256 of the container, hex
  std::string robot_id;
  std::string event_id;
  std::uint64_t seq = 0;
  std::size_t size = 0;
  std::size_t frame_count = 0;
};

/// Content-addressed SVC1 files plus a JSON-lines index.
class ClipStore {
 public:
  explicit ClipStore(std::filesystem::path dir);

  /// Stores the container under its SHA-256. Idempotent.
  ClipInfo put(ByteView container, const std::string& robot_id, const std::string& event_id, std::uint64_t seq);
  std::optional<Bytes> get(const std::string& clip_id) const;
  std::optional<ClipInfo> info(const std::string& clip_id) const;
  std::vector<ClipInfo> all() const;

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::map<std::string, ClipInfo> index_;
  std::vector<ClipInfo> order_;
};

// --- fan-out ---------------------------------------------------------------

/// Bounded queue that drops its oldest item on overflow so producers never block.
template <class T>
class DropOldestQueue {
 public:
  explicit DropOldestQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T v) {
    {
      std::lock_guard lk(mu_);
      if (closed_) return;
      if (q_.size() >= capacity_) {
        q_.pop_front();
        ++dropped_;
      }
      q_.push_back(std::move(v));
      ++pushed_;
    }
    cv_.notify_one();
  }

  template <class Rep, class Per>
  std::optional<T> pop_for(std::chrono::duration<Rep, Per> wait) {
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, wait, [&] { return closed_ || !q_.empty(); });
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    return v;
  }

  void close() {
    {
      std::lock_guard lk(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard lk(mu_);
    return closed_;
  }
  std::size_t size() const {
    std::lock_guard lk(mu_);
    return q_.size();
  }
  std::uint64_t dropped() const {
    std::lock_guard lk(mu_);
    return dropped_;
  }
  std::uint64_t pushed() const {
    std::lock_guard lk(mu_);
    return pushed_;
  }

 private:
  const std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> q_;
  bool closed_ = false;
  std::uint64_t dropped_ = 0;
  std::uint64_t pushed_ = 0;
};

}  // namespace sentinel::server
