#include <poll.h>
#include <sys/socket.h>

#include <boost/asio/buffer.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <fstream>

#include "impl.hpp"
#include "sentinel/log.hpp"

namespace sentinel::server {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

namespace {

constexpr std::size_t kBodyLimit = 1u << 20;
constexpr auto kIdleTimeout = 60s;
constexpr int kStreamSendBuffer = 32 * 1024;

struct Target {
  std::vector<std::string> segments;
  std::map<std::string, std::string> query;
};

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size() && hex_value(s[i + 1]) >= 0 && hex_value(s[i + 2]) >= 0) {
      out.push_back(static_cast<char>(hex_value(s[i + 1]) * 16 + hex_value(s[i + 2])));
      i += 2;
    } else if (s[i] == '+') {
      out.push_back(' ');
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

Target parse_target(std::string_view target) {
  Target t;
  std::string_view path = target;
  std::string_view query;
  if (auto q = target.find('?'); q != std::string_view::npos) {
    path = target.substr(0, q);
    query = target.substr(q + 1);
  }
  std::size_t start = 0;
  while (start <= path.size()) {
    auto end = path.find('/', start);
    if (end == std::string_view::npos) end = path.size();
    if (end > start) t.segments.push_back(url_decode(path.substr(start, end - start)));
    start = end + 1;
  }
  while (!query.empty()) {
    auto amp = query.find('&');
    auto pair = query.substr(0, amp);
    auto eq = pair.find('=');
    if (eq == std::string_view::npos) {
      t.query[url_decode(pair)] = "";
    } else {
      t.query[url_decode(pair.substr(0, eq))] = url_decode(pair.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    query = query.substr(amp + 1);
  }
  return t;
}

Response make_response(const Request& req, http::status status, std::string body, std::string_view type) {
  Response res{status, req.version()};
  res.set(http::field::server, "sentinel");
  res.set(http::field::content_type, beast::string_view(type.data(), type.size()));
  res.keep_alive(req.keep_alive());
  res.body() = std::move(body);
  res.prepare_payload();
  return res;
}

Response json_response(const Request& req, http::status status, const json& body) {
  return make_response(req, status, body.dump(), "application/json");
}

Response error_response(const Request& req, http::status status, const std::string& message) {
  return json_response(req, status, {{"error", message}});
}

std::optional<std::string> bearer_token(const Request& req, const Target& t, bool allow_query) {
  auto it = req.find(http::field::authorization);
  if (it != req.end()) {
    std::string_view v(it->value().data(), it->value().size());
    constexpr std::string_view prefix = "Bearer ";
    if (v.size() > prefix.size() && v.substr(0, prefix.size()) == prefix) return std::string(v.substr(prefix.size()));
    return std::nullopt;
  }
  if (allow_query) {
    if (auto q = t.query.find("token"); q != t.query.end()) return q->second;
  }
  return std::nullopt;
}

std::optional<json> json_body(const Request& req) {
  try {
    auto j = json::parse(req.body());
    if (j.is_object()) return j;
  } catch (const json::exception&) {
  }
  return std::nullopt;
}

std::string_view mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  return "application/octet-stream";
}

bool poll_readable(int fd) {
  pollfd p{fd, POLLIN, 0};
  return ::poll(&p, 1, 0) > 0;
}

}  // namespace

void Server::Impl::accept_http() {
  while (!stopping) {
    net::tcp::socket sock(ioc);
    boost::system::error_code ec;
    http_acceptor.accept(sock, ec);
    if (stopping) break;
    if (ec) {
      log::warn("http accept failed", {{"error", ec.message()}});
      std::this_thread::sleep_for(10ms);
      continue;
    }
    spawn([this, s = std::make_shared<net::tcp::socket>(std::move(sock))]() mutable { serve_http(std::move(*s)); });
  }
}

void Server::Impl::serve_http(net::tcp::socket socket) {
  const int fd = socket.native_handle();
  track(fd);
  net::set_timeouts(fd, kIdleTimeout, cfg.send_timeout);
  beast::flat_buffer buffer;

  auto ws_loop = [&](websocket::stream<net::tcp::socket>& ws, auto&& next_message) {
    beast::flat_buffer in;
    while (!stopping) {
      if (!next_message(ws)) break;
      if (poll_readable(fd)) {
        ws.read(in);
        in.consume(in.size());
      }
    }
  };

  try {
    for (;;) {
      http::request_parser<http::string_body> parser;
      parser.body_limit(kBodyLimit);
      beast::error_code ec;
      http::read(socket, buffer, parser, ec);
      if (ec) break;
      Request req = parser.release();
      const auto target = parse_target(std::string_view(req.target().data(), req.target().size()));
      const auto& seg = target.segments;
      const bool is_api = !seg.empty() && seg[0] == "api";
      const bool upgrade = websocket::is_upgrade(req);

      auto reply = [&](Response res) {
        http::write(socket, res, ec);
        return !ec && res.keep_alive();
      };

      if (!is_api) {
        if (cfg.static_dir.empty() || req.method() != http::verb::get) {
          if (!reply(error_response(req, http::status::not_found, "not found"))) break;
          continue;
        }
        std::filesystem::path rel;
        bool safe = true;
        for (const auto& s : seg) {
          if (s == ".." || s.find('\\') != std::string::npos) safe = false;
          rel /= s;
        }
        auto file = cfg.static_dir / rel;
        if (seg.empty() || std::filesystem::is_directory(file)) file /= "index.html";
        std::ifstream in(file, std::ios::binary);
        if (!safe || !in) {
          if (!reply(error_response(req, http::status::not_found, "not found"))) break;
          continue;
        }
        std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (!reply(make_response(req, http::status::ok, std::move(body), mime_type(file)))) break;
        continue;
      }

      // Unauthenticated routes.
      if (seg.size() == 2 && (seg[1] == "register" || seg[1] == "login")) {
        if (req.method() != http::verb::post) {
          if (!reply(error_response(req, http::status::method_not_allowed, "use POST"))) break;
          continue;
        }
        auto body = json_body(req);
        if (!body || !(*body)["username"].is_string() || !(*body)["password"].is_string()) {
          if (!reply(error_response(req, http::status::bad_request, "expected {\"username\", \"password\"}"))) break;
          continue;
        }
        const auto username = (*body)["username"].get<std::string>();
        const auto password = (*body)["password"].get<std::string>();
        Response res;
        if (seg[1] == "register") {
          std::string why;
          switch (users.register_user(username, password, &why)) {
            case RegisterResult::Created:
              res = json_response(req, http::status::created, {{"username", username}});
              break;
            case RegisterResult::Duplicate:
              res = error_response(req, http::status::conflict, why);
              break;
            case RegisterResult::Invalid:
              res = error_response(req, http::status::bad_request, why);
              break;
          }
        } else if (users.verify(username, password)) {
          res = json_response(req, http::status::ok,
                              {{"token", tokens.issue(username)}, {"expires_in", cfg.token_ttl.count()}});
        } else {
          res = error_response(req, http::status::unauthorized, "invalid credentials");
        }
        if (!reply(std::move(res))) break;
        continue;
      }

      auto token = bearer_token(req, target, upgrade);
      std::optional<std::string> user;
      if (token) user = tokens.validate(*token);
      if (!user) {
        auto res = error_response(req, http::status::unauthorized, "missing, invalid or expired token");
        res.set(http::field::www_authenticate, "Bearer");
        if (!reply(std::move(res))) break;
        continue;
      }

      const auto method = req.method();
      // WebSocket routes.
      const bool stream_route = seg.size() == 4 && seg[1] == "robots" && seg[3] == "stream";
      const bool notify_route = seg.size() == 2 && seg[1] == "notifications";
      if (stream_route || notify_route) {
        if (stream_route && !known_robot(seg[2])) {
          if (!reply(error_response(req, http::status::not_found, "unknown robot"))) break;
          continue;
        }
        if (!upgrade) {
          if (!reply(error_response(req, http::status::upgrade_required, "websocket upgrade required"))) break;
          continue;
        }
        net::set_timeouts(fd, 5s, cfg.send_timeout);
        websocket::stream<net::tcp::socket> ws(std::move(socket));
        ws.set_option(websocket::stream_base::decorator(
            [](websocket::response_type& r) { r.set(http::field::server, "sentinel"); }));
        try {
          ws.accept(req);
          if (stream_route) {
            const auto robot_id = seg[2];
            // Keep kernel buffering small so a stalled viewer backs up into its own queue quickly.
            ws.next_layer().set_option(net::asio::socket_base::send_buffer_size(kStreamSendBuffer));
            ws.binary(true);
            auto sub = subscribe_frames(robot_id);
            try {
              ws_loop(ws, [&](auto& w) {
                auto frame = sub->queue.pop_for(100ms);
                if (frame) {
                  w.write(boost::asio::buffer((*frame)->data(), (*frame)->size()));
                  ++sub->delivered;
                }
                return frame.has_value() || !sub->queue.closed();
              });
            } catch (const std::exception& e) {
              log::debug("stream subscriber gone", {{"robot_id", robot_id}, {"error", e.what()}});
            }
            unsubscribe_frames(robot_id, sub);
          } else {
            ws.text(true);
            auto sub = subscribe_notifications(*user);
            try {
              ws_loop(ws, [&](auto& w) {
                auto text = sub->queue.pop_for(100ms);
                if (text) w.write(boost::asio::buffer(*text));
                return text.has_value() || !sub->queue.closed();
              });
            } catch (const std::exception& e) {
              log::debug("notification subscriber gone", {{"error", e.what()}});
            }
            unsubscribe_notifications(sub);
          }
        } catch (const std::exception& e) {
          log::debug("websocket ended", {{"error", e.what()}});
        }
        if (ws.is_open()) {
          beast::error_code ignored;
          ws.next_layer().shutdown(net::tcp::socket::shutdown_both, ignored);
        }
        untrack(fd);
        return;
      }

      Response res;
      if (seg.size() == 2 && seg[1] == "robots") {
        if (method != http::verb::get) {
          res = error_response(req, http::status::method_not_allowed, "use GET");
        } else {
          json list = json::array();
          std::lock_guard lk(reg_mu);
          for (const auto& [_, e] : registry) list.push_back(to_json(e.info));
          res = json_response(req, http::status::ok, list);
        }
      } else if (seg.size() == 4 && seg[1] == "robots" && seg[3] == "commands") {
        if (method != http::verb::post) {
          res = error_response(req, http::status::method_not_allowed, "use POST");
        } else if (auto body = json_body(req); !body) {
          res = error_response(req, http::status::bad_request, "command must be a JSON object");
        } else {
          try {
            if (!body->contains("command_id")) (*body)["command_id"] = channel::format_uuid(channel::random_uuid());
            auto cmd = msg::parse_command(*body);
            switch (route_command(*user, seg[2], cmd)) {
              case RouteResult::Accepted:
                res = json_response(req, http::status::accepted, {{"command_id", cmd.command_id}, {"robot_id", seg[2]}});
                break;
              case RouteResult::UnknownRobot:
                res = error_response(req, http::status::not_found, "unknown robot");
                break;
              case RouteResult::Offline:
                res = error_response(req, http::status::conflict, "robot offline; commands are not queued");
                break;
            }
          } catch (const msg::BadCommand& e) {
            res = error_response(req, http::status::bad_request, e.what());
          }
        }
      } else if (seg.size() == 2 && seg[1] == "events") {
        if (method != http::verb::get) {
          res = error_response(req, http::status::method_not_allowed, "use GET");
        } else {
          EventQuery q;
          q.page_size = cfg.page_size;
          std::string problem;
          if (auto k = target.query.find("kind"); k != target.query.end() && !k->second.empty()) {
            q.kind = parse_event_kind(k->second);
            if (!q.kind) problem = "kind must be Motion or Fire";
          }
          if (auto r = target.query.find("robot"); r != target.query.end() && !r->second.empty()) q.robot_id = r->second;
          if (auto p = target.query.find("page"); p != target.query.end() && !p->second.empty()) {
            try {
              std::size_t used = 0;
              const long v = std::stol(p->second, &used);
              if (used != p->second.size() || v < 1) throw std::invalid_argument("page");
              q.page = static_cast<std::size_t>(v);
            } catch (const std::exception&) {
              problem = "page must be a positive integer";
            }
          }
          if (!problem.empty()) {
            res = error_response(req, http::status::bad_request, problem);
          } else {
            auto page = events.query(q);
            json list = json::array();
            for (const auto& e : page.events) list.push_back(to_json(e));
            res = json_response(req, http::status::ok,
                                {{"events", list}, {"page", q.page}, {"page_size", q.page_size}, {"total", page.total}});
          }
        }
      } else if (seg.size() == 3 && seg[1] == "clips") {
        if (method != http::verb::get) {
          res = error_response(req, http::status::method_not_allowed, "use GET");
        } else if (auto bytes = clips.get(seg[2])) {
          res = make_response(req, http::status::ok, std::string(bytes->begin(), bytes->end()),
                              "application/octet-stream");
        } else {
          res = error_response(req, http::status::not_found, "unknown clip");
        }
      } else {
        res = error_response(req, http::status::not_found, "no such route");
      }
      if (!reply(std::move(res))) break;
    }
  } catch (const std::exception& e) {
    log::debug("http connection ended", {{"error", e.what()}});
  }
  beast::error_code ignored;
  socket.shutdown(net::tcp::socket::shutdown_both, ignored);
  untrack(fd);
}

}  // namespace sentinel::server
