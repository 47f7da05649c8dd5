#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <variant>

#include "sentinel/agent.hpp"
#include "sentinel/channel.hpp"
#include "sentinel/net.hpp"

namespace sentinel::robot {

using namespace std::chrono_literals;

struct RobotOptions {
  net::HostPort server;
  crypto::PublicKey server_public{};
  std::chrono::milliseconds backoff_initial = 500ms;
  std::chrono::milliseconds backoff_max = 30s;
  std::chrono::milliseconds io_timeout = 5s;
  /// A connection that delivers nothing for this long is considered dead. The
  /// server ACKs every status report, so this only trips on a silent peer.
  std::chrono::milliseconds idle_timeout = 15s;
  /// Journal records unacknowledged for this long are sent again.
  std::chrono::milliseconds resend_after = 5s;
  /// Called on the agent thread after every tick.
  std::function<void(std::int64_t tick)> on_tick;
};

struct Snapshot {
  std::int64_t tick = 0;
  agent::Mode mode = agent::Mode::Idle;
  world::RobotPose pose;
  bool connected = false;
  std::size_t journal_size = 0;
  std::uint64_t sessions = 0;  // completed handshakes
  agent::AgentStats stats;
};

/// Drives an Agent in real time: ticks at the configured rate, keeps a secure
/// session to the server alive (reconnecting with exponential backoff) and
/// flushes the backup journal whenever a session is up.
class RobotRuntime {
 public:
  RobotRuntime(agent::Agent agent, channel::StaticIdentity identity, RobotOptions options);
  ~RobotRuntime();
  RobotRuntime(const RobotRuntime&) = delete;
  RobotRuntime& operator=(const RobotRuntime&) = delete;

  /// Blocks until stop().
  void run();
  void stop();

  /// When disabled the current session is dropped and no reconnect is attempted.
  void set_network_enabled(bool enabled);
  /// Drops the current session; the link reconnects on its own.
  void drop_connection();

  Snapshot snapshot() const;
  const channel::SenderId& robot_id() const { return identity_.id; }
  /// Only safe once run() has returned.
  agent::Agent& agent() { return agent_; }

 private:
  struct Connection;
  struct Connected {
    std::shared_ptr<Connection> conn;
    channel::SessionKeys keys;
  };
  struct Lost {
    std::uint64_t generation;
  };
  struct Inbound {
    std::uint64_t generation;
    channel::Opened msg;
  };
  using Event = std::variant<Connected, Lost, Inbound>;

  void link_loop();
  bool wait_backoff(std::chrono::milliseconds d);
  void handle(Event ev);
  void dispatch(std::vector<agent::Effect> effects);
  void send(const agent::Effect& e);
  void pump_journal();
  void disconnect_current();
  void publish_snapshot();

  agent::Agent agent_;
  channel::StaticIdentity identity_;
  RobotOptions options_;
  channel::SenderId server_id_{};
  channel::TrustStore trust_;
  channel::ChannelPolicy policy_ = channel::ChannelPolicy::standard();

  net::BlockingQueue<Event> events_;
  std::thread link_;
  std::atomic<bool> stopping_{false};
  std::atomic<bool> network_enabled_{true};
  std::mutex link_mu_;
  std::condition_variable link_cv_;
  std::shared_ptr<Connection> link_conn_;  // guarded by link_mu_

  // Agent-thread state.
  std::shared_ptr<Connection> conn_;
  channel::SessionKeys send_keys_;
  std::map<std::uint64_t, std::chrono::steady_clock::time_point> in_flight_;
  std::uint64_t sessions_ = 0;

  mutable std::mutex snap_mu_;
  Snapshot snap_;
};

}  // namespace sentinel::robot
