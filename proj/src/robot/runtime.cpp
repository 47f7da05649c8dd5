#include "sentinel/robot.hpp"

#include <sys/socket.h>

#include <boost/asio/io_context.hpp>

#include "sentinel/log.hpp"

namespace sentinel::robot {

using channel::MsgType;
using Clock = std::chrono::steady_clock;

struct RobotRuntime::Connection {
  net::asio::io_context ioc;
  net::tcp::socket socket{ioc};
  std::uint64_t generation = 0;
  std::atomic<bool> closed{false};

  void shutdown() {
    if (!closed.exchange(true)) ::shutdown(socket.native_handle(), SHUT_RDWR);
  }
};

RobotRuntime::RobotRuntime(agent::Agent agent, channel::StaticIdentity identity, RobotOptions options)
    : agent_(std::move(agent)), identity_(std::move(identity)), options_(std::move(options)) {
  crypto::check_public_key(options_.server_public);
  server_id_ = channel::id_for_public_key(options_.server_public);
  trust_.emplace(server_id_, crypto::VerifyingKey(options_.server_public));
  publish_snapshot();
}

RobotRuntime::~RobotRuntime() {
  stop();
  if (link_.joinable()) link_.join();
}

void RobotRuntime::stop() {
  stopping_ = true;
  {
    std::lock_guard lk(link_mu_);
    if (link_conn_) link_conn_->shutdown();
  }
  link_cv_.notify_all();
  events_.close();
}

void RobotRuntime::set_network_enabled(bool enabled) {
  network_enabled_ = enabled;
  if (!enabled) drop_connection();
  link_cv_.notify_all();
}

void RobotRuntime::drop_connection() {
  std::lock_guard lk(link_mu_);
  if (link_conn_) link_conn_->shutdown();
}

Snapshot RobotRuntime::snapshot() const {
  std::lock_guard lk(snap_mu_);
  return snap_;
}

void RobotRuntime::publish_snapshot() {
  Snapshot s;
  s.tick = agent_.state().tick;
  s.mode = agent_.state().mode;
  s.pose = agent_.state().pose;
  s.connected = conn_ != nullptr;
  s.journal_size = agent_.journal().size();
  s.sessions = sessions_;
  s.stats = agent_.stats();
  std::lock_guard lk(snap_mu_);
  snap_ = std::move(s);
}

bool RobotRuntime::wait_backoff(std::chrono::milliseconds d) {
  std::unique_lock lk(link_mu_);
  link_cv_.wait_for(lk, d, [&] { return stopping_.load(); });
  return !stopping_;
}

void RobotRuntime::link_loop() {
  auto backoff = options_.backoff_initial;
  std::uint64_t generation = 0;
  while (!stopping_) {
    if (!network_enabled_) {
      std::unique_lock lk(link_mu_);
      link_cv_.wait_for(lk, 50ms, [&] { return stopping_.load() || network_enabled_.load(); });
      continue;
    }
    auto conn = std::make_shared<Connection>();
    conn->generation = ++generation;
    bool established = false;
    try {
      net::connect_with_timeout(conn->socket, options_.server, options_.io_timeout);
      {
        std::lock_guard lk(link_mu_);
        link_conn_ = conn;
      }
      if (stopping_ || !network_enabled_) throw std::runtime_error("link disabled");
      net::set_io_timeout(conn->socket, options_.io_timeout);
      channel::RobotHandshake hs(identity_, options_.server_public);
      net::write_frame(conn->socket, hs.hello());
      auto keys = hs.finish(net::read_frame(conn->socket, channel::kMaxFrameLength));
      established = true;
      backoff = options_.backoff_initial;
      log::info("session established", {{"server", net::to_string(options_.server)}});
      events_.push(Connected{conn, keys});

      net::set_io_timeout(conn->socket, options_.idle_timeout);
      int faults = 0;
      while (!stopping_) {
        auto frame = net::read_frame(conn->socket, channel::kMaxFrameLength);
        try {
          auto opened = channel::open(frame, keys, trust_, policy_);
          faults = 0;
          events_.push(Inbound{conn->generation, std::move(opened)});
        } catch (const channel::ChannelError& e) {
          log::warn("rejected inbound envelope", {{"reason", std::string(to_string(e.code()))}});
          if (++faults >= 10) throw;
        }
      }
    } catch (const std::exception& e) {
      if (!stopping_) log::debug("link down", {{"error", e.what()}});
    }
    conn->shutdown();
    {
      std::lock_guard lk(link_mu_);
      if (link_conn_ == conn) link_conn_.reset();
    }
    if (established) events_.push(Lost{conn->generation});
    if (stopping_) break;
    const auto wait = established ? options_.backoff_initial : backoff;
    if (!established) backoff = std::min(backoff * 2, options_.backoff_max);
    if (!wait_backoff(wait)) break;
  }
}

void RobotRuntime::disconnect_current() {
  if (conn_) conn_->shutdown();
  conn_.reset();
  in_flight_.clear();
  agent_.set_connected(false);
}

void RobotRuntime::send(const agent::Effect& e) {
  if (!conn_) return;
  try {
    auto frame = channel::seal(e.payload, e.type, policy_.minimum(e.type), send_keys_, identity_, policy_);
    net::write_frame(conn_->socket, frame);
  } catch (const std::exception& ex) {
    log::debug("send failed", {{"error", ex.what()}});
    disconnect_current();
  }
}

void RobotRuntime::pump_journal() {
  if (!conn_) return;
  const auto now = Clock::now();
  // A failed send drops the connection but leaves the journal untouched.
  for (const auto& rec : agent_.journal().records()) {
    auto it = in_flight_.find(rec.seq);
    if (it != in_flight_.end() && now - it->second < options_.resend_after) continue;
    in_flight_[rec.seq] = now;
    send(agent::Effect{static_cast<MsgType>(rec.kind), rec.payload, rec.seq});
    if (!conn_) return;
  }
}

void RobotRuntime::dispatch(std::vector<agent::Effect> effects) {
  pump_journal();
  for (const auto& e : effects) {
    if (!e.record_seq) send(e);
  }
}

void RobotRuntime::handle(Event ev) {
  if (auto* c = std::get_if<Connected>(&ev)) {
    disconnect_current();
    conn_ = std::move(c->conn);
    send_keys_ = c->keys;
    ++sessions_;
    agent_.set_connected(true);
    pump_journal();
    send(agent_.status_effect());
    return;
  }
  if (auto* l = std::get_if<Lost>(&ev)) {
    if (conn_ && conn_->generation == l->generation) disconnect_current();
    return;
  }
  auto& in = std::get<Inbound>(ev);
  if (!conn_ || conn_->generation != in.generation) return;
  switch (in.msg.msg_type) {
    case MsgType::Command:
      dispatch(agent_.handle_command_payload(in.msg.payload));
      break;
    case MsgType::Ack: {
      try {
        auto body = msg::parse_json(in.msg.payload);
        if (auto rs = body.find("record_seq"); rs != body.end() && rs->is_number_unsigned()) {
          const auto seq = rs->get<std::uint64_t>();
          agent_.journal().acknowledge(seq);
          in_flight_.erase(seq);
        }
      } catch (const std::exception& e) {
        log::warn("bad ACK payload", {{"error", e.what()}});
      }
      break;
    }
    case MsgType::Error:
      log::warn("server reported error", {{"payload", to_string(in.msg.payload)}});
      break;
    default:
      log::warn("unexpected message from server", {{"type", std::string(to_string(in.msg.msg_type))}});
  }
}

void RobotRuntime::run() {
  link_ = std::thread([this] { link_loop(); });
  const auto period = std::chrono::nanoseconds(1'000'000'000LL / agent_.config().tick_rate_hz);
  auto next_tick = Clock::now() + period;
  while (!stopping_) {
    if (auto ev = events_.pop_until(next_tick)) {
      handle(std::move(*ev));
    }
    if (stopping_) break;
    const auto now = Clock::now();
    if (now >= next_tick) {
      dispatch(agent_.tick());
      if (options_.on_tick) options_.on_tick(agent_.state().tick);
      next_tick += period;
      if (now - next_tick > 10 * period) next_tick = now + period;
    }
    publish_snapshot();
  }
  disconnect_current();
  publish_snapshot();
  stop();
  if (link_.joinable()) link_.join();
}

}  // namespace sentinel::robot
