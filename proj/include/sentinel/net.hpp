#pragma once

#include <boost/asio/ip/tcp.hpp>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <string>

#include "sentinel/bytes.hpp"

namespace sentinel::net {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;

struct HostPort {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

/// Accepts "host:port", ":port" and "port". Throws std::invalid_argument.
HostPort parse_host_port(std::string_view text, std::string_view default_host = "127.0.0.1");
std::string to_string(const HostPort& hp);

/// Socket-level send/receive timeouts; blocking calls fail once they expire.
void set_io_timeout(tcp::socket& s, std::chrono::milliseconds timeout);
/// Zero disables the respective timeout.
void set_timeouts(int fd, std::chrono::milliseconds recv, std::chrono::milliseconds send);

/// Reads one length-prefixed envelope frame, prefix included.
/// Throws boost::system::system_error on I/O failure and DecodeError on an oversized length.
Bytes read_frame(tcp::socket& s, std::size_t max_length);
void write_frame(tcp::socket& s, ByteView frame);

/// Connects with a deadline. Throws boost::system::system_error.
void connect_with_timeout(tcp::socket& s, const HostPort& hp, std::chrono::milliseconds timeout);

/// Unbounded multi-producer queue with close semantics.
template <class T>
class BlockingQueue {
 public:
  void push(T v) {
    {
      std::lock_guard lk(mu_);
      if (closed_) return;
      q_.push_back(std::move(v));
    }
    cv_.notify_one();
  }

  /// Waits until an item is available, the deadline passes, or the queue closes.
  template <class Clock, class Dur>
  std::optional<T> pop_until(std::chrono::time_point<Clock, Dur> deadline) {
    std::unique_lock lk(mu_);
    cv_.wait_until(lk, deadline, [&] { return closed_ || !q_.empty(); });
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    return v;
  }

  std::optional<T> pop() {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return closed_ || !q_.empty(); });
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

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> q_;
  bool closed_ = false;
};

}  // namespace sentinel::net
