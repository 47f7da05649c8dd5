#include "sentinel/log.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <string>

namespace sentinel::log {

namespace {
std::atomic<Level> g_level{Level::Info};
std::mutex g_write_mu;

const char* name(Level l) {
  switch (l) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warn: return "warn";
    case Level::Error: return "error";
    case Level::Off: return "off";
  }
  return "info";
}
}  // namespace

void init_from_env() {
  const char* env = std::getenv("SENTINEL_LOG");
  if (env == nullptr) return;
  const std::string v(env);
  if (v == "debug") set_level(Level::Debug);
  else if (v == "info") set_level(Level::Info);
  else if (v == "warn") set_level(Level::Warn);
  else if (v == "error") set_level(Level::Error);
  else if (v == "off") set_level(Level::Off);
}

void set_level(Level l) { g_level.store(l); }
Level level() { return g_level.load(); }

void write(Level l, std::string_view msg, const nlohmann::json& fields) {
  if (l < g_level.load() || l == Level::Off) return;
  nlohmann::json line = fields.is_object() ? fields : nlohmann::json::object();
  line["ts"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
                   .count();
  line["level"] = name(l);
  line["msg"] = msg;
  const std::string text = line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
  std::lock_guard lock(g_write_mu);
  std::fputs(text.c_str(), stderr);
}

}  // namespace sentinel::log
