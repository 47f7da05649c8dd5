#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "sentinel/bytes.hpp"
#include "sentinel/net.hpp"

namespace sentinel::client {

using json = nlohmann::json;

struct HttpResult {
  int status = 0;
  std::string body;
  std::string content_type;

  /// Parsed body; null when it is not JSON.
  json json_body() const;
};

/// Minimal blocking HTTP/1.1 client for the operator API (one connection per call).
class ApiClient {
 public:
  explicit ApiClient(net::HostPort server, std::chrono::milliseconds timeout = std::chrono::seconds(10));

  HttpResult request(const std::string& method, const std::string& target, const std::optional<json>& body = {},
                     const std::string& token = {}) const;
  HttpResult get(const std::string& target, const std::string& token = {}) const {
    return request("GET", target, std::nullopt, token);
  }
  HttpResult post(const std::string& target, const json& body, const std::string& token = {}) const {
    return request("POST", target, body, token);
  }

  const net::HostPort& server() const { return server_; }

 private:
  net::HostPort server_;
  std::chrono::milliseconds timeout_;
};

struct WsMessage {
  bool binary = false;
  Bytes data;
};

/// WebSocket subscription with a background reader. `pause()` stops reading
/// from the socket entirely, which makes the server see a stalled consumer.
class WsSubscription {
 public:
  WsSubscription(const net::HostPort& server, const std::string& target, const std::string& token,
                 std::chrono::milliseconds timeout = std::chrono::seconds(10), int receive_buffer = 0);
  ~WsSubscription();
  WsSubscription(const WsSubscription&) = delete;
  WsSubscription& operator=(const WsSubscription&) = delete;

  std::optional<WsMessage> next(std::chrono::milliseconds wait);
  void pause();
  void resume();
  void close();
  std::uint64_t received() const;
  bool open() const;

 private:
  struct State;
  std::shared_ptr<State> state_;
  std::thread reader_;
};

}  // namespace sentinel::client
