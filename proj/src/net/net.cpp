#include "sentinel/net.hpp"

#include <sys/socket.h>
#include <sys/time.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/asio/read.hpp>
#include <boost/asio/write.hpp>
#include <charconv>
#include <stdexcept>

namespace sentinel::net {

HostPort parse_host_port(std::string_view text, std::string_view default_host) {
  HostPort hp;
  hp.host = std::string(default_host);
  std::string_view port = text;
  if (auto colon = text.rfind(':'); colon != std::string_view::npos) {
    if (colon > 0) hp.host = std::string(text.substr(0, colon));
    port = text.substr(colon + 1);
  }
  unsigned value = 0;
  auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (port.empty() || ec != std::errc() || ptr != port.data() + port.size() || value > 65535) {
    throw std::invalid_argument("bad address '" + std::string(text) + "': expected host:port");
  }
  hp.port = static_cast<std::uint16_t>(value);
  return hp;
}

std::string to_string(const HostPort& hp) { return hp.host + ":" + std::to_string(hp.port); }

namespace {
timeval to_timeval(std::chrono::milliseconds t) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(t.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((t.count() % 1000) * 1000);
  return tv;
}
}  // namespace

void set_timeouts(int fd, std::chrono::milliseconds recv, std::chrono::milliseconds send) {
  const auto r = to_timeval(recv);
  const auto s = to_timeval(send);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &r, sizeof r);
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &s, sizeof s);
}

void set_io_timeout(tcp::socket& s, std::chrono::milliseconds timeout) { set_timeouts(s.native_handle(), timeout, timeout); }

Bytes read_frame(tcp::socket& s, std::size_t max_length) {
  Bytes frame(4);
  asio::read(s, asio::buffer(frame));
  const std::uint32_t len = Reader(frame).u32();
  if (len > max_length) throw DecodeError("frame length " + std::to_string(len) + " exceeds limit");
  frame.resize(4 + len);
  asio::read(s, asio::buffer(frame.data() + 4, len));
  return frame;
}

void write_frame(tcp::socket& s, ByteView frame) { asio::write(s, asio::buffer(frame.data(), frame.size())); }

void connect_with_timeout(tcp::socket& s, const HostPort& hp, std::chrono::milliseconds timeout) {
  auto& ctx = static_cast<asio::io_context&>(s.get_executor().context());
  tcp::resolver resolver(ctx);
  auto endpoints = resolver.resolve(hp.host, std::to_string(hp.port));
  boost::system::error_code result = asio::error::would_block;
  asio::async_connect(s, endpoints, [&](const boost::system::error_code& ec, const tcp::endpoint&) { result = ec; });
  ctx.restart();
  ctx.run_for(timeout);
  if (result == asio::error::would_block) {
    boost::system::error_code ignored;
    s.close(ignored);
    ctx.run();
    throw boost::system::system_error(asio::error::timed_out, "connect");
  }
  if (result) throw boost::system::system_error(result, "connect");
  s.set_option(tcp::no_delay(true));
}

}  // namespace sentinel::net
