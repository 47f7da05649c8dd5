#include "sentinel/cli.hpp"

#include <fstream>
#include <set>

#include "sentinel/messages.hpp"

namespace sentinel::cli {

namespace {

const std::set<std::string> kSubcommands{"serve", "robot", "keygen", "client"};

/// Typed, range-checked access to one JSON object; remembers which keys were read.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path(key) + ": wrong type");
    }
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback, std::int64_t lo, std::int64_t hi) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < lo || x > hi)
      throw ConfigError(path(key) + ": " + std::to_string(x) + " outside " + std::to_string(lo) + ".." +
                        std::to_string(hi));
    return x;
  }

  double number(const std::string& key, double fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
    return v.get<double>();
  }

  net::HostPort address(const std::string& key, const net::HostPort& fallback) {
    const auto text = get<std::string>(key, "");
    if (text.empty()) return fallback;
    try {
      return net::parse_host_port(text);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }

  Fields object(const std::string& key) {
    used_.insert(key);
    static const json kEmpty = json::object();
    return Fields(j_.contains(key) ? j_.at(key) : kEmpty, path(key));
  }

  void reject_unknown() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError(path(k) + ": unknown setting");
  }

 private:
  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

template <class F>
void checked(F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::chrono::milliseconds ms(std::int64_t v) { return std::chrono::milliseconds(v); }

}  // namespace

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("'" + path.string() + "' is not valid JSON");
  return j;
}

json load_config_file(const std::filesystem::path& path) {
  auto j = load_json_file(path);
  if (!j.is_object()) throw ConfigError("config file '" + path.string() + "' must hold a JSON object");
  return j;
}

json select_section(const json& file, const std::string& subcommand) {
  if (file.is_null()) return json::object();
  bool sectioned = false;
  for (const auto& [k, v] : file.items()) sectioned = sectioned || kSubcommands.count(k);
  if (!sectioned) return file;
  if (!file.contains(subcommand)) return json::object();
  return file.at(subcommand);
}

json layer(const json& file, const json& flags) {
  json out = file.is_null() ? json::object() : file;
  out.merge_patch(flags);
  return out;
}

ServeSettings serve_settings(const json& j) {
  ServeSettings s;
  Fields f(j, "");
  auto& c = s.server;
  c.http = f.address("http", c.http);
  c.robots = f.address("robots", c.robots);
  c.data_dir = f.get<std::string>("data_dir", c.data_dir.string());
  c.static_dir = f.get<std::string>("static_dir", "");
  c.subscriber_queue = static_cast<std::size_t>(f.integer("subscriber_queue", 64, 1, 1 << 16));
  c.notification_queue = static_cast<std::size_t>(f.integer("notification_queue", 256, 1, 1 << 16));
  c.token_ttl = std::chrono::seconds(f.integer("token_ttl_s", c.token_ttl.count(), 1, 365LL * 24 * 3600));
  c.page_size = static_cast<std::size_t>(f.integer("page_size", 50, 1, 1000));
  c.handshake_timeout = ms(f.integer("handshake_timeout_ms", c.handshake_timeout.count(), 1, 600000));
  c.send_timeout = ms(f.integer("send_timeout_ms", c.send_timeout.count(), 1, 600000));
  c.robot_idle_timeout = ms(f.integer("robot_idle_timeout_ms", c.robot_idle_timeout.count(), 1, 3600000));
  c.max_faults = static_cast<int>(f.integer("max_faults", c.max_faults, 1, 1000000));
  {
    auto sc = f.object("scrypt");
    c.scrypt.n = static_cast<std::uint64_t>(sc.integer("n", static_cast<std::int64_t>(c.scrypt.n), 2, 1 << 22));
    c.scrypt.r = static_cast<std::uint64_t>(sc.integer("r", static_cast<std::int64_t>(c.scrypt.r), 1, 64));
    c.scrypt.p = static_cast<std::uint64_t>(sc.integer("p", static_cast<std::int64_t>(c.scrypt.p), 1, 16));
    sc.reject_unknown();
    if ((c.scrypt.n & (c.scrypt.n - 1)) != 0) throw ConfigError("scrypt.n: must be a power of two");
  }
  s.key_file = f.get<std::string>("key", "");
  if (j.contains("allowlist") && j.at("allowlist").is_string()) {
    s.allowlist = {f.get<std::string>("allowlist", "")};
  } else {
    s.allowlist = f.get<std::vector<std::string>>("allowlist", {});
  }
  s.ready_file = f.get<std::string>("ready_file", "");
  f.reject_unknown();
  if (s.key_file.empty()) throw ConfigError("key: server private key file is required");
  checked([&] { c.validate(); });
  return s;
}

RobotSettings robot_settings(const json& j) {
  RobotSettings s;
  Fields f(j, "");
  s.scenario = f.get<std::string>("scenario", "");
  s.key_file = f.get<std::string>("key", "");
  s.server_key_file = f.get<std::string>("server_key", "");
  s.stats_file = f.get<std::string>("stats_file", "");
  s.journal.path = f.get<std::string>("journal", "");
  s.journal.capacity_bytes =
      static_cast<std::size_t>(f.integer("journal_capacity_bytes", static_cast<std::int64_t>(s.journal.capacity_bytes),
                                         4096, std::int64_t{1} << 40));
  s.journal.sync = f.get<bool>("journal_sync", s.journal.sync);

  auto& a = s.agent;
  a.tick_rate_hz = static_cast<int>(f.integer("tick_rate", a.tick_rate_hz, 1, 1000));
  a.status_interval_ticks = static_cast<int>(f.integer("status_interval_ticks", a.status_interval_ticks, 1, 1000000));
  {
    auto d = f.object("detector");
    a.detector.pixel_threshold = static_cast<int>(d.integer("pixel_threshold", a.detector.pixel_threshold, 0, 255));
    a.detector.area_fraction = d.number("area_fraction", a.detector.area_fraction);
    a.detector.learning_rate = d.number("learning_rate", a.detector.learning_rate);
    a.detector.warmup_frames = static_cast<int>(d.integer("warmup_frames", a.detector.warmup_frames, 0, 100000));
    a.detector.pre_roll = static_cast<int>(d.integer("pre_roll", a.detector.pre_roll, 0, 10000));
    a.detector.post_roll = static_cast<int>(d.integer("post_roll", a.detector.post_roll, 0, 10000));
    d.reject_unknown();
  }
  {
    auto fc = f.object("fire");
    a.fire.smoke_threshold_ppm = fc.number("smoke_threshold_ppm", a.fire.smoke_threshold_ppm);
    a.fire.temperature_threshold_c = fc.number("temperature_threshold_c", a.fire.temperature_threshold_c);
    a.fire.debounce_ticks = static_cast<int>(fc.integer("debounce_ticks", a.fire.debounce_ticks, 1, 100000));
    fc.reject_unknown();
  }

  auto& o = s.options;
  o.server = f.address("server", net::HostPort{"127.0.0.1", 7700});
  o.backoff_initial = ms(f.integer("backoff_initial_ms", o.backoff_initial.count(), 1, 3600000));
  o.backoff_max = ms(f.integer("backoff_max_ms", o.backoff_max.count(), 1, 3600000));
  o.io_timeout = ms(f.integer("io_timeout_ms", o.io_timeout.count(), 1, 600000));
  o.idle_timeout = ms(f.integer("idle_timeout_ms", o.idle_timeout.count(), 1, 3600000));
  o.resend_after = ms(f.integer("resend_after_ms", o.resend_after.count(), 1, 3600000));
  f.reject_unknown();

  if (s.scenario.empty()) throw ConfigError("scenario: scenario file is required");
  if (s.key_file.empty()) throw ConfigError("key: robot private key file is required");
  if (s.server_key_file.empty()) throw ConfigError("server_key: server public key file is required");
  if (o.backoff_max < o.backoff_initial) throw ConfigError("backoff_max_ms must be >= backoff_initial_ms");
  checked([&] { a.validate(); });
  return s;
}

json to_json(const robot::Snapshot& s) {
  return {{"tick", s.tick},
          {"mode", agent::to_string(s.mode)},
          {"pose", msg::pose_json(s.pose)},
          {"connected", s.connected},
          {"journal_size", s.journal_size},
          {"sessions", s.sessions},
          {"stats",
           {{"motion_events", s.stats.motion_events},
            {"fire_alerts", s.stats.fire_alerts},
            {"clips", s.stats.clips},
            {"frames", s.stats.frames},
            {"journal_drops", s.stats.journal_drops},
            {"clip_sha256", s.stats.clip_sha256}}}};
}

}  // namespace sentinel::cli
