#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "sentinel/channel.hpp"
#include "sentinel/messages.hpp"
#include "sentinel/net.hpp"
#include "sentinel/stores.hpp"

namespace sentinel::server {

using namespace std::chrono_literals;

struct ServerConfig {
  net::HostPort http{"127.0.0.1", 8080};
  net::HostPort robots{"127.0.0.1", 7700};
  std::filesystem::path data_dir = "sentinel-data";
  std::filesystem::path static_dir;  // operator-ui build output; empty disables
  std::size_t subscriber_queue = 64;
  std::size_t notification_queue = 256;
  std::chrono::seconds token_ttl = 24h;
  std::size_t page_size = 50;
  std::chrono::milliseconds handshake_timeout = 5s;
  std::chrono::milliseconds send_timeout = 10s;
  std::chrono::milliseconds robot_idle_timeout = 30s;
  int max_faults = 10;
  crypto::ScryptParams scrypt;
  ClockFn clock = SystemClock::now;

  void validate() const;
};

struct RobotInfo {
  std::string robot_id;
  bool connected = false;
  std::string mode = "Unknown";
  json last_status;  // null until the first STATUS
  std::int64_t connected_since_ms = 0;
  std::uint64_t sessions = 0;
  std::string stream_link;
};

json to_json(const RobotInfo& r);

struct IngestStats {
  std::uint64_t envelopes = 0;
  std::uint64_t frames = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t faults = 0;
  std::size_t samples = 0;
  double p50_ms = 0;
  double p99_ms = 0;
  double max_ms = 0;
};

enum class RouteResult { Accepted, UnknownRobot, Offline };

std::string stream_link(const std::string& robot_id);

/// The control server: robot listener, ingest, stores, fan-out and the
/// operator HTTP/WebSocket API.
class Server {
 public:
  Server(ServerConfig config, channel::StaticIdentity identity, std::vector<crypto::PublicKey> allowlist);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds both listeners and starts serving. Throws boost::system::system_error on bind failure.
  void start();
  void stop();

  std::uint16_t http_port() const;
  std::uint16_t robot_port() const;

  std::vector<RobotInfo> robots() const;
  RouteResult route_command(const std::string& username, const std::string& robot_id, const msg::Command& cmd);

  UserStore& users();
  TokenStore& tokens();
  EventStore& events();
  ClipStore& clips();
  IngestStats ingest_stats() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace sentinel::server
