#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "sentinel/channel.hpp"
#include "sentinel/cli.hpp"
#include "sentinel/log.hpp"
#include "sentinel/robot.hpp"
#include "sentinel/script.hpp"
#include "sentinel/server.hpp"

using namespace sentinel;
using cli::ConfigError;
using cli::json;

namespace {

/// Collects flags that were actually given, as a JSON patch keyed like the config file.
class Flags {
 public:
  template <class T>
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto slot = std::make_shared<std::optional<T>>();
    app->add_option(flag, *slot, help);
    setters_.push_back([slot, key](json& j) {
      if (!*slot) return;
      json* at = &j;
      std::size_t start = 0;
      for (auto dot = key.find('.'); dot != std::string::npos; dot = key.find('.', start)) {
        at = &(*at)[key.substr(start, dot - start)];
        start = dot + 1;
      }
      (*at)[key.substr(start)] = **slot;
    });
  }

  void add_list(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto slot = std::make_shared<std::vector<std::string>>();
    app->add_option(flag, *slot, help);
    setters_.push_back([slot, key](json& j) {
      if (!slot->empty()) j[key] = *slot;
    });
  }

  json patch() const {
    json j = json::object();
    for (const auto& s : setters_) s(j);
    return j;
  }

 private:
  std::vector<std::function<void(json&)>> setters_;
};

json layered(const std::string& config_path, const std::string& subcommand, const Flags& flags) {
  std::string path = config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("SENTINEL_CONFIG"); env != nullptr) path = env;
  }
  json file = json::object();
  if (!path.empty()) file = cli::select_section(cli::load_config_file(path), subcommand);
  return cli::layer(file, flags.patch());
}

/// Blocks SIGINT/SIGTERM for every thread; call before starting any.
sigset_t block_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

int wait_signal(const sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
  return sig;
}

void write_file_atomic(const std::string& path, const std::string& text) {
  const auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

int cmd_serve(const json& j) {
  const auto s = cli::serve_settings(j);
  const auto priv = channel::read_private_key_file(s.key_file);
  std::vector<crypto::PublicKey> allow;
  for (const auto& f : s.allowlist) {
    auto keys = channel::read_public_key_file(f);
    allow.insert(allow.end(), keys.begin(), keys.end());
  }
  if (allow.empty()) log::warn("allowlist is empty; no robot can connect");

  const auto sigs = block_signals();
  server::Server srv(s.server, channel::identity_from_private(priv), allow);
  try {
    srv.start();
  } catch (const std::exception& e) {
    log::error("cannot start server", {{"error", e.what()}});
    return cli::kRuntime;
  }
  if (!s.ready_file.empty())
    write_file_atomic(s.ready_file, json{{"http", srv.http_port()}, {"robots", srv.robot_port()}}.dump() + "\n");
  const int sig = wait_signal(sigs);
  log::info("shutting down", {{"signal", sig}});
  srv.stop();
  return cli::kOk;
}

int cmd_robot(const json& j) {
  auto s = cli::robot_settings(j);
  world::Scenario scenario;
  try {
    scenario = world::load_scenario_file(s.scenario);
  } catch (const std::exception& e) {
    throw ConfigError("scenario '" + s.scenario + "': " + e.what());
  }
  const auto priv = channel::read_private_key_file(s.key_file);
  const auto server_keys = channel::read_public_key_file(s.server_key_file);
  if (server_keys.size() != 1) throw ConfigError("server_key: expected exactly one public key");
  s.options.server_public = server_keys.front();

  const auto sigs = block_signals();
  agent::Agent a(std::move(scenario), s.agent, agent::BackupJournal(s.journal));
  robot::RobotRuntime runtime(std::move(a), channel::identity_from_private(priv), s.options);
  log::info("robot starting", {{"robot_id", channel::format_uuid(runtime.robot_id())},
                               {"server", net::to_string(s.options.server)}});

  std::thread loop([&] { runtime.run(); });
  std::atomic<bool> done{false};
  std::thread stats;
  if (!s.stats_file.empty()) {
    stats = std::thread([&] {
      while (!done) {
        write_file_atomic(s.stats_file, cli::to_json(runtime.snapshot()).dump() + "\n");
        for (int i = 0; i < 10 && !done; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
      }
    });
  }
  const int sig = wait_signal(sigs);
  log::info("shutting down", {{"signal", sig}});
  runtime.stop();
  loop.join();
  done = true;
  if (stats.joinable()) stats.join();
  if (!s.stats_file.empty()) write_file_atomic(s.stats_file, cli::to_json(runtime.snapshot()).dump() + "\n");
  return cli::kOk;
}

int cmd_keygen(const std::string& out, bool force) {
  const auto key_path = out + ".key";
  const auto pub_path = out + ".pub";
  if (!force && (std::filesystem::exists(key_path) || std::filesystem::exists(pub_path)))
    throw ConfigError("'" + key_path + "' or '" + pub_path + "' exists; pass --force to overwrite");
  const auto kp = crypto::generate_keypair();
  channel::write_private_key_file(key_path, kp.priv);
  channel::write_public_key_file(pub_path, kp.pub);
  std::cout << to_hex(kp.pub) << "\n";
  log::info("key pair written", {{"private", key_path},
                                 {"public", pub_path},
                                 {"id", channel::format_uuid(channel::id_for_public_key(kp.pub))}});
  return cli::kOk;
}

int cmd_client(const json& j) {
  if (!j.is_object()) throw ConfigError("client settings must be an object");
  for (const auto& [k, v] : j.items())
    if (k != "server" && k != "script" && k != "transcript") throw ConfigError(k + ": unknown setting");
  const auto server = net::parse_host_port(j.value("server", "127.0.0.1:8080"));
  const auto script_path = j.value("script", "");
  if (script_path.empty()) throw ConfigError("script: a script file is required");
  const auto script = cli::load_json_file(script_path);
  cli::check_script(script);
  const auto result = cli::run_script(script, server);
  const auto text = result.transcript.dump(2) + "\n";
  if (const auto path = j.value("transcript", ""); !path.empty()) {
    std::ofstream(path) << text;
  } else {
    std::cout << text;
  }
  return result.ok ? cli::kOk : cli::kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  log::init_from_env();
  CLI::App app{"sentinel: simulated surveillance robots, control server and operator client"};
  app.require_subcommand(1);
  std::string config;
  app.add_option("-c,--config", config, "JSON config file (default: $SENTINEL_CONFIG)");

  Flags serve_flags;
  auto* serve = app.add_subcommand("serve", "Run the control server");
  serve_flags.add<std::string>(serve, "--http", "http", "Operator HTTP listen address [host]:port");
  serve_flags.add<std::string>(serve, "--robots", "robots", "Robot listen address [host]:port");
  serve_flags.add<std::string>(serve, "--data-dir", "data_dir", "Directory for users, events and clips");
  serve_flags.add<std::string>(serve, "--static-dir", "static_dir", "Operator UI assets to serve");
  serve_flags.add<std::string>(serve, "--key", "key", "Server private key file");
  serve_flags.add_list(serve, "--allowlist", "allowlist", "Robot public key file(s)");
  serve_flags.add<std::string>(serve, "--ready-file", "ready_file", "Write bound ports here once listening");
  serve_flags.add<std::int64_t>(serve, "--subscriber-queue", "subscriber_queue", "Frames buffered per viewer");
  serve_flags.add<std::int64_t>(serve, "--notification-queue", "notification_queue", "Notifications per listener");
  serve_flags.add<std::int64_t>(serve, "--token-ttl", "token_ttl_s", "Session token lifetime in seconds");
  serve_flags.add<std::int64_t>(serve, "--page-size", "page_size", "Events per page");
  serve_flags.add<std::int64_t>(serve, "--handshake-timeout", "handshake_timeout_ms", "Robot handshake timeout (ms)");
  serve_flags.add<std::int64_t>(serve, "--send-timeout", "send_timeout_ms", "Socket send timeout (ms)");
  serve_flags.add<std::int64_t>(serve, "--robot-idle-timeout", "robot_idle_timeout_ms", "Silent robot cutoff (ms)");
  serve_flags.add<std::int64_t>(serve, "--max-faults", "max_faults", "Consecutive bad envelopes before disconnect");
  serve_flags.add<std::int64_t>(serve, "--scrypt-n", "scrypt.n", "scrypt cost parameter");
  serve_flags.add<std::int64_t>(serve, "--scrypt-r", "scrypt.r", "scrypt block size");
  serve_flags.add<std::int64_t>(serve, "--scrypt-p", "scrypt.p", "scrypt parallelism");

  Flags robot_flags;
  auto* robot = app.add_subcommand("robot", "Run a simulated robot");
  robot_flags.add<std::string>(robot, "--scenario", "scenario", "Scenario JSON file");
  robot_flags.add<std::string>(robot, "--server", "server", "Server robot address host:port");
  robot_flags.add<std::string>(robot, "--server-key", "server_key", "Server public key file");
  robot_flags.add<std::string>(robot, "--key", "key", "Robot private key file");
  robot_flags.add<std::string>(robot, "--journal", "journal", "Backup journal file (empty: memory only)");
  robot_flags.add<std::int64_t>(robot, "--journal-capacity", "journal_capacity_bytes", "Journal size cap");
  robot_flags.add<bool>(robot, "--journal-sync", "journal_sync", "fsync every journal append");
  robot_flags.add<std::string>(robot, "--stats-file", "stats_file", "Write runtime counters here");
  robot_flags.add<std::int64_t>(robot, "--tick-rate", "tick_rate", "Agent ticks per second");
  robot_flags.add<std::int64_t>(robot, "--status-interval", "status_interval_ticks", "Ticks between status reports");
  robot_flags.add<std::int64_t>(robot, "--pixel-threshold", "detector.pixel_threshold", "Detector pixel threshold");
  robot_flags.add<double>(robot, "--area-fraction", "detector.area_fraction", "Detector changed-area fraction");
  robot_flags.add<double>(robot, "--learning-rate", "detector.learning_rate", "Background learning rate");
  robot_flags.add<std::int64_t>(robot, "--warmup-frames", "detector.warmup_frames", "Frames before detecting");
  robot_flags.add<std::int64_t>(robot, "--pre-roll", "detector.pre_roll", "Clip frames before trigger");
  robot_flags.add<std::int64_t>(robot, "--post-roll", "detector.post_roll", "Clip frames after trigger");
  robot_flags.add<double>(robot, "--smoke-threshold", "fire.smoke_threshold_ppm", "Smoke alarm level (ppm)");
  robot_flags.add<double>(robot, "--temperature-threshold", "fire.temperature_threshold_c", "Heat alarm level (C)");
  robot_flags.add<std::int64_t>(robot, "--fire-debounce", "fire.debounce_ticks", "Ticks over threshold to alert");
  robot_flags.add<std::int64_t>(robot, "--backoff-initial", "backoff_initial_ms", "First reconnect delay (ms)");
  robot_flags.add<std::int64_t>(robot, "--backoff-max", "backoff_max_ms", "Reconnect delay cap (ms)");
  robot_flags.add<std::int64_t>(robot, "--io-timeout", "io_timeout_ms", "Connect/handshake timeout (ms)");
  robot_flags.add<std::int64_t>(robot, "--idle-timeout", "idle_timeout_ms", "Silent server cutoff (ms)");
  robot_flags.add<std::int64_t>(robot, "--resend-after", "resend_after_ms", "Resend unacknowledged records (ms)");

  auto* keygen = app.add_subcommand("keygen", "Generate a P-256 key pair (<out>.key, <out>.pub)");
  std::string keygen_out;
  bool keygen_force = false;
  keygen->add_option("out", keygen_out, "Output path prefix")->required();
  keygen->add_flag("--force", keygen_force, "Overwrite existing files");

  Flags client_flags;
  auto* client = app.add_subcommand("client", "Run a scripted API session and print a JSON transcript");
  client_flags.add<std::string>(client, "--server", "server", "Server HTTP address host:port");
  client_flags.add<std::string>(client, "--script", "script", "Script JSON file");
  client_flags.add<std::string>(client, "--transcript", "transcript", "Write the transcript here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cli::kOk : cli::kUsage;
  }

  try {
    if (*serve) return cmd_serve(layered(config, "serve", serve_flags));
    if (*robot) return cmd_robot(layered(config, "robot", robot_flags));
    if (*keygen) return cmd_keygen(keygen_out, keygen_force);
    return cmd_client(layered(config, "client", client_flags));
  } catch (const ConfigError& e) {
    log::error("configuration error", {{"error", e.what()}});
    return cli::kUsage;
  } catch (const channel::KeyFileError& e) {
    log::error("key error", {{"error", e.what()}});
    return cli::kUsage;
  } catch (const std::invalid_argument& e) {
    log::error("configuration error", {{"error", e.what()}});
    return cli::kUsage;
  } catch (const std::exception& e) {
    log::error("fatal", {{"error", e.what()}});
    return cli::kRuntime;
  }
}
