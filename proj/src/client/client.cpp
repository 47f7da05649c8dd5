#include "sentinel/client.hpp"

#include <sys/socket.h>

#include <boost/asio/io_context.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <condition_variable>
#include <deque>
#include <mutex>

namespace sentinel::client {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;

json HttpResult::json_body() const {
  auto j = json::parse(body, nullptr, false);
  return j.is_discarded() ? json(nullptr) : j;
}

ApiClient::ApiClient(net::HostPort server, std::chrono::milliseconds timeout)
    : server_(std::move(server)), timeout_(timeout) {}

HttpResult ApiClient::request(const std::string& method, const std::string& target, const std::optional<json>& body,
                              const std::string& token) const {
  net::asio::io_context ioc;
  net::tcp::socket sock(ioc);
  net::connect_with_timeout(sock, server_, timeout_);
  net::set_io_timeout(sock, timeout_);

  http::request<http::string_body> req{http::string_to_verb(method), target, 11};
  req.set(http::field::host, server_.host);
  req.set(http::field::user_agent, "sentinel-client");
  if (!token.empty()) req.set(http::field::authorization, "Bearer " + token);
  if (body) {
    req.set(http::field::content_type, "application/json");
    req.body() = body->dump();
  }
  req.keep_alive(false);
  req.prepare_payload();
  http::write(sock, req);

  beast::flat_buffer buf;
  http::response_parser<http::string_body> parser;
  parser.body_limit(256u << 20);
  http::read(sock, buf, parser);
  auto res = parser.release();
  beast::error_code ignored;
  sock.shutdown(net::tcp::socket::shutdown_both, ignored);

  HttpResult out;
  out.status = static_cast<int>(res.result_int());
  out.body = std::move(res.body());
  if (auto it = res.find(http::field::content_type); it != res.end()) out.content_type = std::string(it->value());
  return out;
}

struct WsSubscription::State {
  net::asio::io_context ioc;
  websocket::stream<net::tcp::socket> ws{ioc};
  std::mutex mu;
  std::condition_variable cv;
  std::deque<WsMessage> inbox;
  bool paused = false;
  bool closed = false;
  bool open = false;
  std::uint64_t received = 0;
};

WsSubscription::WsSubscription(const net::HostPort& server, const std::string& target, const std::string& token,
                               std::chrono::milliseconds timeout, int receive_buffer)
    : state_(std::make_shared<State>()) {
  auto& ws = state_->ws;
  net::connect_with_timeout(ws.next_layer(), server, timeout);
  if (receive_buffer > 0) ws.next_layer().set_option(net::asio::socket_base::receive_buffer_size(receive_buffer));
  net::set_io_timeout(ws.next_layer(), timeout);
  ws.set_option(websocket::stream_base::decorator([&](websocket::request_type& r) {
    if (!token.empty()) r.set(http::field::authorization, "Bearer " + token);
  }));
  websocket::response_type res;
  ws.handshake(res, server.host + ":" + std::to_string(server.port), target);
  // Reads block indefinitely from here on; close() shuts the socket down.
  net::set_timeouts(ws.next_layer().native_handle(), std::chrono::milliseconds(0), timeout);
  state_->open = true;
  reader_ = std::thread([st = state_] {
    beast::flat_buffer buf;
    for (;;) {
      {
        std::unique_lock lk(st->mu);
        st->cv.wait(lk, [&] { return !st->paused || st->closed; });
        if (st->closed) break;
      }
      beast::error_code ec;
      st->ws.read(buf, ec);
      if (ec) break;
      WsMessage m;
      m.binary = st->ws.got_binary();
      auto data = buf.data();
      m.data.assign(static_cast<const std::uint8_t*>(data.data()),
                    static_cast<const std::uint8_t*>(data.data()) + data.size());
      buf.consume(buf.size());
      std::lock_guard lk(st->mu);
      st->inbox.push_back(std::move(m));
      ++st->received;
      st->cv.notify_all();
    }
    std::lock_guard lk(st->mu);
    st->open = false;
    st->cv.notify_all();
  });
}

WsSubscription::~WsSubscription() {
  close();
  if (reader_.joinable()) reader_.join();
}

std::optional<WsMessage> WsSubscription::next(std::chrono::milliseconds wait) {
  std::unique_lock lk(state_->mu);
  state_->cv.wait_for(lk, wait, [&] { return !state_->inbox.empty() || !state_->open; });
  if (state_->inbox.empty()) return std::nullopt;
  auto m = std::move(state_->inbox.front());
  state_->inbox.pop_front();
  return m;
}

void WsSubscription::pause() {
  std::lock_guard lk(state_->mu);
  state_->paused = true;
}

void WsSubscription::resume() {
  std::lock_guard lk(state_->mu);
  state_->paused = false;
  state_->cv.notify_all();
}

void WsSubscription::close() {
  {
    std::lock_guard lk(state_->mu);
    if (state_->closed) return;
    state_->closed = true;
    state_->cv.notify_all();
  }
  ::shutdown(state_->ws.next_layer().native_handle(), SHUT_RDWR);
}

std::uint64_t WsSubscription::received() const {
  std::lock_guard lk(state_->mu);
  return state_->received;
}

bool WsSubscription::open() const {
  std::lock_guard lk(state_->mu);
  return state_->open;
}

}  // namespace sentinel::client
