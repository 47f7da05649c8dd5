#include <sys/socket.h>

#include <algorithm>
#include <boost/asio/ip/address.hpp>

#include "impl.hpp"
#include "sentinel/log.hpp"
#include "sentinel/vision.hpp"

namespace sentinel::server {

using channel::MsgType;

namespace {
constexpr std::size_t kLatencySamples = 100000;
constexpr std::size_t kCommandOwners = 4096;
}  // namespace

void ServerConfig::validate() const {
  if (subscriber_queue == 0) throw std::invalid_argument("subscriber_queue must be positive");
  if (notification_queue == 0) throw std::invalid_argument("notification_queue must be positive");
  if (page_size == 0 || page_size > 1000) throw std::invalid_argument("page_size must be in 1..1000");
  if (token_ttl.count() <= 0) throw std::invalid_argument("token_ttl must be positive");
  if (max_faults <= 0) throw std::invalid_argument("max_faults must be positive");
}

std::string stream_link(const std::string& robot_id) { return "/api/robots/" + robot_id + "/stream"; }

json to_json(const RobotInfo& r) {
  return {{"robot_id", r.robot_id},
          {"connected", r.connected},
          {"mode", r.mode},
          {"last_status", r.last_status},
          {"connected_since_ms", r.connected_since_ms},
          {"sessions", r.sessions},
          {"stream_link", r.stream_link}};
}

// --- sessions --------------------------------------------------------------

void RobotSession::close() {
  if (!closed.exchange(true)) ::shutdown(socket.native_handle(), SHUT_RDWR);
  outq.close();
}

bool RobotSession::send(MsgType type, ByteView payload) {
  if (closed) return false;
  Bytes frame;
  {
    std::lock_guard lk(send_mu);
    frame = channel::seal(payload, type, srv.policy.minimum(type), send_keys, srv.identity, srv.policy);
  }
  outq.push(std::move(frame));
  return true;
}

// --- server ----------------------------------------------------------------

Server::Impl::Impl(ServerConfig config, channel::StaticIdentity id, std::vector<crypto::PublicKey> keys)
    : cfg(std::move(config)),
      identity(std::move(id)),
      users(cfg.data_dir / "users.jsonl", cfg.scrypt, cfg.clock),
      tokens(cfg.token_ttl, cfg.clock),
      events(cfg.data_dir / "events.jsonl"),
      clips(cfg.data_dir / "clips") {
  for (const auto& k : keys) {
    const auto rid = channel::id_for_public_key(k);
    allowlist.emplace(rid, crypto::VerifyingKey(k));
    RobotEntry e;
    e.info.robot_id = channel::format_uuid(rid);
    e.info.stream_link = stream_link(e.info.robot_id);
    registry.emplace(e.info.robot_id, std::move(e));
  }
  for (const auto& e : events.all()) seen.emplace(e.robot_id, e.seq);
  for (const auto& c : clips.all()) seen.emplace(c.robot_id, c.seq);
  samples.reserve(kLatencySamples);
}

void Server::Impl::spawn(std::function<void()> fn) {
  {
    std::lock_guard lk(workers_mu);
    ++active_workers;
  }
  std::thread([this, fn = std::move(fn)] {
    try {
      fn();
    } catch (const std::exception& e) {
      log::error("worker failed", {{"error", e.what()}});
    }
    std::lock_guard lk(workers_mu);
    --active_workers;
    workers_cv.notify_all();
  }).detach();
}

void Server::Impl::track(int fd) {
  std::lock_guard lk(workers_mu);
  open_fds.insert(fd);
  if (stopping) ::shutdown(fd, SHUT_RDWR);
}

void Server::Impl::untrack(int fd) {
  std::lock_guard lk(workers_mu);
  open_fds.erase(fd);
}

bool Server::Impl::known_robot(const std::string& robot_id) const {
  std::lock_guard lk(reg_mu);
  return registry.count(robot_id) != 0;
}

void Server::Impl::accept_robots() {
  while (!stopping) {
    net::tcp::socket sock(ioc);
    boost::system::error_code ec;
    robot_acceptor.accept(sock, ec);
    if (stopping) break;
    if (ec) {
      log::warn("robot accept failed", {{"error", ec.message()}});
      std::this_thread::sleep_for(10ms);
      continue;
    }
    spawn([this, s = std::make_shared<net::tcp::socket>(std::move(sock))]() mutable { serve_robot(std::move(*s)); });
  }
}

void Server::Impl::serve_robot(net::tcp::socket socket) {
  const int fd = socket.native_handle();
  track(fd);
  auto session = std::make_shared<RobotSession>(*this, std::move(socket));
  std::string peer;
  try {
    peer = session->socket.remote_endpoint().address().to_string();
    session->socket.set_option(net::tcp::no_delay(true));
    net::set_io_timeout(session->socket, cfg.handshake_timeout);
    auto hello = net::read_frame(session->socket, channel::kMaxFrameLength);
    auto accepted = channel::accept_hello(hello, identity, allowlist);
    net::write_frame(session->socket, accepted.hello_ack);
    session->robot_id = channel::format_uuid(accepted.robot_id);
    session->trust.emplace(accepted.robot_id, crypto::VerifyingKey(accepted.robot_static));
    session->recv_keys = accepted.keys;
    session->send_keys = accepted.keys;
  } catch (const std::exception& e) {
    log::warn("robot handshake rejected", {{"peer", peer}, {"error", e.what()}});
    session->close();
    untrack(fd);
    return;
  }

  net::set_timeouts(fd, cfg.robot_idle_timeout, cfg.send_timeout);

  std::shared_ptr<RobotSession> evicted;
  {
    std::lock_guard lk(reg_mu);
    auto& entry = registry[session->robot_id];
    evicted = std::move(entry.session);
    entry.session = session;
    entry.info.robot_id = session->robot_id;
    entry.info.connected = true;
    entry.info.connected_since_ms = unix_ms(cfg.clock());
    entry.info.stream_link = stream_link(session->robot_id);
    ++entry.info.sessions;
  }
  if (evicted) {
    log::info("replacing older robot session", {{"robot_id", session->robot_id}});
    evicted->close();
  }
  log::info("robot connected", {{"robot_id", session->robot_id}, {"peer", peer}});

  spawn([this, session] {
    while (auto frame = session->outq.pop()) {
      try {
        net::write_frame(session->socket, *frame);
      } catch (const std::exception& e) {
        log::debug("robot write failed", {{"robot_id", session->robot_id}, {"error", e.what()}});
        session->close();
        break;
      }
    }
  });

  int faults = 0;
  while (!stopping && !session->closed) {
    Bytes frame;
    try {
      frame = net::read_frame(session->socket, channel::kMaxFrameLength);
    } catch (const std::exception& e) {
      log::debug("robot read ended", {{"robot_id", session->robot_id}, {"error", e.what()}});
      break;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      auto opened = channel::open(frame, session->recv_keys, session->trust, policy);
      faults = 0;
      ingest(session, opened);
    } catch (const std::exception& e) {
      {
        std::lock_guard lk(stats_mu);
        ++counters.faults;
      }
      log::warn("robot envelope rejected", {{"robot_id", session->robot_id}, {"error", e.what()}});
      if (++faults >= cfg.max_faults) {
        log::warn("closing robot session after repeated faults", {{"robot_id", session->robot_id}});
        break;
      }
    }
    record_latency(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }

  session->close();
  {
    std::lock_guard lk(reg_mu);
    auto it = registry.find(session->robot_id);
    if (it != registry.end() && it->second.session == session) {
      it->second.session.reset();
      it->second.info.connected = false;
    }
  }
  log::info("robot disconnected", {{"robot_id", session->robot_id}});
  untrack(fd);
}

void Server::Impl::record_latency(double ms) {
  std::lock_guard lk(stats_mu);
  ++counters.envelopes;
  if (samples.size() < kLatencySamples) {
    samples.push_back(ms);
  } else {
    samples[sample_next] = ms;
    sample_next = (sample_next + 1) % kLatencySamples;
  }
}

namespace {

json parse_object(ByteView payload) {
  auto j = msg::parse_json(payload);
  if (!j.is_object()) throw std::invalid_argument("payload must be a JSON object");
  return j;
}

std::uint64_t record_seq(const json& j) {
  auto it = j.find("seq");
  if (it == j.end() || !it->is_number_unsigned()) throw std::invalid_argument("payload lacks a record seq");
  return it->get<std::uint64_t>();
}

}  // namespace

void Server::Impl::ingest(const std::shared_ptr<RobotSession>& s, const channel::Opened& m) {
  json ack{{"seq", m.seq}};
  switch (m.msg_type) {
    case MsgType::Frame: {
      vision::validate(msg::decode_frame_message(m.payload));
      auto shared = std::make_shared<const Bytes>(m.payload);
      std::vector<std::shared_ptr<FrameSub>> subs;
      {
        std::lock_guard lk(hub_mu);
        if (auto it = frame_subs.find(s->robot_id); it != frame_subs.end()) subs = it->second;
      }
      for (auto& sub : subs) sub->queue.push(shared);
      std::lock_guard lk(stats_mu);
      ++counters.frames;
      return;  // frames are not acknowledged
    }
    case MsgType::Status: {
      auto body = parse_object(m.payload);
      if (body.contains("seq")) ack["record_seq"] = record_seq(body);
      std::lock_guard lk(reg_mu);
      auto& info = registry[s->robot_id].info;
      info.last_status = body;
      if (body.contains("mode") && body["mode"].is_string()) info.mode = body["mode"].get<std::string>();
      break;
    }
    case MsgType::FireAlert:
    case MsgType::MotionEvent:
      ingest_event(s, m, ack);
      break;
    case MsgType::ClipUpload:
      ingest_clip(s, m, ack);
      break;
    case MsgType::Ack:
    case MsgType::Error: {
      auto body = parse_object(m.payload);
      const auto id = body.value("command_id", std::string());
      std::string owner;
      {
        std::lock_guard lk(hub_mu);
        if (auto it = command_owner.find(id); it != command_owner.end()) owner = it->second;
      }
      if (!owner.empty()) {
        notify_user(owner, {{"type", "command_result"},
                            {"robot_id", s->robot_id},
                            {"command_id", id},
                            {"result", m.msg_type == MsgType::Ack ? "ack" : "error"},
                            {"body", body}});
      }
      return;  // command replies are not acknowledged
    }
    default:
      throw channel::ChannelError(channel::ErrorCode::PolicyViolation,
                                  "unexpected " + std::string(channel::to_string(m.msg_type)) + " from robot");
  }
  s->send(MsgType::Ack, msg::json_bytes(ack));
}

void Server::Impl::ingest_event(const std::shared_ptr<RobotSession>& s, const channel::Opened& m, json& ack) {
  auto body = parse_object(m.payload);
  const auto seq = record_seq(body);
  ack["record_seq"] = seq;

  EventRecord e;
  e.event_id = body.value("event_id", std::string());
  if (e.event_id.empty()) e.event_id = channel::format_uuid(channel::random_uuid());
  e.robot_id = s->robot_id;
  e.kind = m.msg_type == MsgType::FireAlert ? EventKind::Fire : EventKind::Motion;
  e.seq = seq;
  e.timestamp_ms = body.value("timestamp_ms", std::int64_t{0});
  e.received_at_ms = unix_ms(cfg.clock());
  e.details = body;
  e.details.erase("event_id");
  e.details.erase("seq");
  e.details.erase("timestamp_ms");
  e.stream_link = stream_link(s->robot_id);

  {
    std::lock_guard lk(ingest_mu);
    if (seen.count({s->robot_id, seq})) {
      std::lock_guard st(stats_mu);
      ++counters.duplicates;
      return;
    }
    events.add(e);
    seen.emplace(s->robot_id, seq);
  }
  notify_all({{"type", "event"}, {"event", to_json(e)}});
}

void Server::Impl::ingest_clip(const std::shared_ptr<RobotSession>& s, const channel::Opened& m, json& ack) {
  auto upload = msg::decode_clip_upload(m.payload);
  const auto seq = record_seq(upload.metadata);
  ack["record_seq"] = seq;
  const auto event_id = upload.metadata.value("event_id", std::string());
  const auto claimed = upload.metadata.value("sha256", std::string());
  const auto actual = to_hex(crypto::sha256(upload.container));
  if (claimed != actual) throw std::invalid_argument("clip digest mismatch");
  vision::decode_clip(upload.container);

  std::optional<EventRecord> linked;
  ClipInfo info;
  {
    std::lock_guard lk(ingest_mu);
    if (seen.count({s->robot_id, seq})) {
      std::lock_guard st(stats_mu);
      ++counters.duplicates;
      return;
    }
    info = clips.put(upload.container, s->robot_id, event_id, seq);
    if (!event_id.empty()) linked = events.link_clip(event_id, info.clip_id);
    seen.emplace(s->robot_id, seq);
  }
  if (linked) {
    notify_all({{"type", "event_updated"}, {"event", to_json(*linked)}, {"clip_link", "/api/clips/" + info.clip_id}});
  }
}

// --- fan-out ---------------------------------------------------------------

std::shared_ptr<FrameSub> Server::Impl::subscribe_frames(const std::string& robot_id) {
  auto sub = std::make_shared<FrameSub>(cfg.subscriber_queue);
  std::lock_guard lk(hub_mu);
  frame_subs[robot_id].push_back(sub);
  return sub;
}

void Server::Impl::unsubscribe_frames(const std::string& robot_id, const std::shared_ptr<FrameSub>& sub) {
  sub->queue.close();
  std::lock_guard lk(hub_mu);
  auto& v = frame_subs[robot_id];
  v.erase(std::remove(v.begin(), v.end(), sub), v.end());
}

std::shared_ptr<NotifySub> Server::Impl::subscribe_notifications(const std::string& username) {
  auto sub = std::make_shared<NotifySub>(username, cfg.notification_queue);
  std::lock_guard lk(hub_mu);
  notify_subs.push_back(sub);
  return sub;
}

void Server::Impl::unsubscribe_notifications(const std::shared_ptr<NotifySub>& sub) {
  sub->queue.close();
  std::lock_guard lk(hub_mu);
  notify_subs.erase(std::remove(notify_subs.begin(), notify_subs.end(), sub), notify_subs.end());
}

void Server::Impl::notify_all(const json& j) {
  const auto text = j.dump();
  std::lock_guard lk(hub_mu);
  for (auto& sub : notify_subs) sub->queue.push(text);
}

void Server::Impl::notify_user(const std::string& username, const json& j) {
  const auto text = j.dump();
  std::lock_guard lk(hub_mu);
  for (auto& sub : notify_subs)
    if (sub->username == username) sub->queue.push(text);
}

// --- public surface --------------------------------------------------------

Server::Server(ServerConfig config, channel::StaticIdentity identity, std::vector<crypto::PublicKey> allowlist) {
  config.validate();
  impl_ = std::make_unique<Impl>(std::move(config), std::move(identity), std::move(allowlist));
}

Server::~Server() { stop(); }

namespace {

void bind_listener(net::tcp::acceptor& acc, const net::HostPort& hp) {
  net::tcp::endpoint ep(boost::asio::ip::make_address(hp.host == "localhost" ? "127.0.0.1" : hp.host), hp.port);
  acc.open(ep.protocol());
  acc.set_option(net::tcp::acceptor::reuse_address(true));
  acc.bind(ep);
  acc.listen();
}

}  // namespace

void Server::start() {
  auto& d = *impl_;
  if (d.started.exchange(true)) return;
  try {
    bind_listener(d.robot_acceptor, d.cfg.robots);
    bind_listener(d.http_acceptor, d.cfg.http);
  } catch (...) {
    boost::system::error_code ignored;
    d.robot_acceptor.close(ignored);
    d.http_acceptor.close(ignored);
    d.started = false;
    throw;
  }
  d.robot_thread = std::thread([&d] { d.accept_robots(); });
  d.http_thread = std::thread([&d] { d.accept_http(); });
  log::info("server listening", {{"http", http_port()}, {"robots", robot_port()}});
}

void Server::stop() {
  auto& d = *impl_;
  if (!d.started || d.stopping.exchange(true)) return;
  ::shutdown(d.robot_acceptor.native_handle(), SHUT_RDWR);
  ::shutdown(d.http_acceptor.native_handle(), SHUT_RDWR);
  if (d.robot_thread.joinable()) d.robot_thread.join();
  if (d.http_thread.joinable()) d.http_thread.join();
  boost::system::error_code ignored;
  d.robot_acceptor.close(ignored);
  d.http_acceptor.close(ignored);
  {
    std::lock_guard lk(d.reg_mu);
    for (auto& [_, e] : d.registry)
      if (e.session) e.session->close();
  }
  {
    std::lock_guard lk(d.hub_mu);
    for (auto& [_, subs] : d.frame_subs)
      for (auto& s : subs) s->queue.close();
    for (auto& s : d.notify_subs) s->queue.close();
  }
  std::unique_lock lk(d.workers_mu);
  for (int fd : d.open_fds) ::shutdown(fd, SHUT_RDWR);
  d.workers_cv.wait(lk, [&] { return d.active_workers == 0; });
}

std::uint16_t Server::http_port() const { return impl_->http_acceptor.local_endpoint().port(); }
std::uint16_t Server::robot_port() const { return impl_->robot_acceptor.local_endpoint().port(); }

std::vector<RobotInfo> Server::robots() const {
  std::lock_guard lk(impl_->reg_mu);
  std::vector<RobotInfo> out;
  for (const auto& [_, e] : impl_->registry) out.push_back(e.info);
  return out;
}

RouteResult Server::route_command(const std::string& username, const std::string& robot_id, const msg::Command& cmd) {
  return impl_->route_command(username, robot_id, cmd);
}

RouteResult Server::Impl::route_command(const std::string& username, const std::string& robot_id,
                                        const msg::Command& cmd) {
  auto& d = *this;
  std::shared_ptr<RobotSession> session;
  {
    std::lock_guard lk(d.reg_mu);
    auto it = d.registry.find(robot_id);
    if (it == d.registry.end()) return RouteResult::UnknownRobot;
    session = it->second.session;
  }
  if (!session || session->closed) return RouteResult::Offline;
  {
    std::lock_guard lk(d.hub_mu);
    if (d.command_owner.emplace(cmd.command_id, username).second) {
      d.command_order.push_back(cmd.command_id);
      if (d.command_order.size() > kCommandOwners) {
        d.command_owner.erase(d.command_order.front());
        d.command_order.pop_front();
      }
    }
  }
  if (!session->send(MsgType::Command, msg::json_bytes(msg::to_json(cmd)))) return RouteResult::Offline;
  return RouteResult::Accepted;
}

UserStore& Server::users() { return impl_->users; }
TokenStore& Server::tokens() { return impl_->tokens; }
EventStore& Server::events() { return impl_->events; }
ClipStore& Server::clips() { return impl_->clips; }

IngestStats Server::ingest_stats() const {
  std::lock_guard lk(impl_->stats_mu);
  IngestStats s = impl_->counters;
  auto v = impl_->samples;
  s.samples = v.size();
  if (!v.empty()) {
    std::sort(v.begin(), v.end());
    auto pct = [&](double p) { return v[std::min(v.size() - 1, static_cast<std::size_t>(p * (v.size() - 1) + 0.5))]; };
    s.p50_ms = pct(0.50);
    s.p99_ms = pct(0.99);
    s.max_ms = v.back();
  }
  return s;
}

}  // namespace sentinel::server
