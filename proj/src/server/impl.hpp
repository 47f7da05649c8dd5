#pragma once

#include <atomic>
#include <boost/asio/io_context.hpp>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "sentinel/server.hpp"

namespace sentinel::server {

struct FrameSub {
  explicit FrameSub(std::size_t capacity) : queue(capacity) {}
  DropOldestQueue<std::shared_ptr<const Bytes>> queue;
  std::atomic<std::uint64_t> delivered{0};
};

struct NotifySub {
  NotifySub(std::string user, std::size_t capacity) : username(std::move(user)), queue(capacity) {}
  std::string username;
  DropOldestQueue<std::string> queue;
};

struct RobotSession {
  RobotSession(Server::Impl& s, net::tcp::socket sock) : srv(s), socket(std::move(sock)) {}

  void close();
  /// Seals and queues; never blocks on the network.
  bool send(channel::MsgType type, ByteView payload);

  Server::Impl& srv;
  net::tcp::socket socket;
  std::string robot_id;
  channel::TrustStore trust;
  channel::SessionKeys recv_keys;  // reader thread only
  std::mutex send_mu;
  channel::SessionKeys send_keys;
  net::BlockingQueue<Bytes> outq;
  std::atomic<bool> closed{false};
};

struct RobotEntry {
  RobotInfo info;
  std::shared_ptr<RobotSession> session;
};

struct Server::Impl {
  Impl(ServerConfig config, channel::StaticIdentity id, std::vector<crypto::PublicKey> allowlist);

  // threads
  void spawn(std::function<void()> fn);
  void track(int fd);
  void untrack(int fd);

  // robots
  void accept_robots();
  void serve_robot(net::tcp::socket socket);
  void ingest(const std::shared_ptr<RobotSession>& s, const channel::Opened& m);
  void ingest_event(const std::shared_ptr<RobotSession>& s, const channel::Opened& m, json& ack);
  void ingest_clip(const std::shared_ptr<RobotSession>& s, const channel::Opened& m, json& ack);
  void record_latency(double ms);

  // fan-out
  std::shared_ptr<FrameSub> subscribe_frames(const std::string& robot_id);
  void unsubscribe_frames(const std::string& robot_id, const std::shared_ptr<FrameSub>& sub);
  std::shared_ptr<NotifySub> subscribe_notifications(const std::string& username);
  void unsubscribe_notifications(const std::shared_ptr<NotifySub>& sub);
  void notify_all(const json& j);
  void notify_user(const std::string& username, const json& j);

  // http (http.cpp)
  void accept_http();
  void serve_http(net::tcp::socket socket);

  bool known_robot(const std::string& robot_id) const;
  RouteResult route_command(const std::string& username, const std::string& robot_id, const msg::Command& cmd);

  ServerConfig cfg;
  channel::StaticIdentity identity;
  channel::ChannelPolicy policy = channel::ChannelPolicy::standard();
  channel::TrustStore allowlist;

  UserStore users;
  TokenStore tokens;
  EventStore events;
  ClipStore clips;

  net::asio::io_context ioc;
  net::tcp::acceptor http_acceptor{ioc};
  net::tcp::acceptor robot_acceptor{ioc};
  std::thread http_thread;
  std::thread robot_thread;
  std::atomic<bool> started{false};
  std::atomic<bool> stopping{false};

  std::mutex workers_mu;
  std::condition_variable workers_cv;
  std::size_t active_workers = 0;
  std::set<int> open_fds;

  mutable std::mutex reg_mu;
  std::map<std::string, RobotEntry> registry;

  std::mutex hub_mu;
  std::map<std::string, std::vector<std::shared_ptr<FrameSub>>> frame_subs;
  std::vector<std::shared_ptr<NotifySub>> notify_subs;
  std::map<std::string, std::string> command_owner;  // command_id -> username
  std::deque<std::string> command_order;

  std::mutex ingest_mu;
  std::set<std::pair<std::string, std::uint64_t>> seen;  // (robot_id, record seq)

  mutable std::mutex stats_mu;
  IngestStats counters;
  std::vector<double> samples;
  std::size_t sample_next = 0;
};

}  // namespace sentinel::server
