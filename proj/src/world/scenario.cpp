#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sentinel/world.hpp"

namespace sentinel::world {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ScenarioError(where + ": " + what);
}

void reject_unknown_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) fail(where, "unknown key '" + key + "'");
  }
}

const json& require(const json& obj, const std::string& where, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(where, std::string("missing key '") + key + "'");
  return *it;
}

std::int64_t as_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) fail(where, "expected integer");
  return v.get<std::int64_t>();
}

Cell as_cell(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 2) fail(where, "expected [x, y]");
  return {static_cast<int>(as_int(v[0], where + "/0")), static_cast<int>(as_int(v[1], where + "/1"))};
}

const json& as_array(const json& obj, const std::string& where, const char* key) {
  static const json kEmpty = json::array();
  auto it = obj.find(key);
  if (it == obj.end()) return kEmpty;
  if (!it->is_array()) fail(where + "/" + key, "expected array");
  return *it;
}

}  // namespace

Scenario load_scenario(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError("scenario parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) fail("/", "scenario must be a JSON object");
  reject_unknown_keys(doc, "/", {"width", "height", "seed", "robot", "obstacles", "intruders", "fires"});

  Scenario sc;
  auto& w = sc.world;
  w.width = static_cast<int>(as_int(require(doc, "/", "width"), "/width"));
  w.height = static_cast<int>(as_int(require(doc, "/", "height"), "/height"));
  if (w.width < 8) fail("/width", "must be >= 8");
  if (w.height < 8) fail("/height", "must be >= 8");
  if (w.width > 4096 || w.height > 4096) fail("/", "world larger than 4096x4096");
  const auto& seed = require(doc, "/", "seed");
  if (!seed.is_number_integer()) fail("/seed", "expected integer");
  w.rng_seed = seed.is_number_unsigned() ? seed.get<std::uint64_t>() : static_cast<std::uint64_t>(seed.get<std::int64_t>());
  w.rng.seed(w.rng_seed);
  w.cells.assign(static_cast<std::size_t>(w.width) * w.height, CellKind::Empty);

  const auto& obstacles = as_array(doc, "", "obstacles");
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    const std::string where = "/obstacles/" + std::to_string(i);
    Cell c = as_cell(obstacles[i], where);
    if (!w.in_bounds(c)) fail(where, "obstacle out of bounds");
    w.cells[static_cast<std::size_t>(c.y) * w.width + c.x] = CellKind::Obstacle;
  }

  const auto& robot = require(doc, "/", "robot");
  if (!robot.is_object()) fail("/robot", "expected object");
  reject_unknown_keys(robot, "/robot", {"x", "y", "heading"});
  sc.robot.x = static_cast<int>(as_int(require(robot, "/robot", "x"), "/robot/x"));
  sc.robot.y = static_cast<int>(as_int(require(robot, "/robot", "y"), "/robot/y"));
  const auto& heading = require(robot, "/robot", "heading");
  if (!heading.is_string()) fail("/robot/heading", "expected string");
  auto h = parse_heading(heading.get<std::string>());
  if (!h) fail("/robot/heading", "must be one of N, E, S, W");
  sc.robot.heading = *h;
  if (!w.in_bounds({sc.robot.x, sc.robot.y})) fail("/robot", "robot out of bounds");
  if (w.at({sc.robot.x, sc.robot.y}) == CellKind::Obstacle) fail("/robot", "robot starts on an obstacle");

  std::set<std::string> ids;
  const auto& intruders = as_array(doc, "", "intruders");
  for (std::size_t i = 0; i < intruders.size(); ++i) {
    const std::string where = "/intruders/" + std::to_string(i);
    const auto& item = intruders[i];
    if (!item.is_object()) fail(where, "expected object");
    reject_unknown_keys(item, where, {"id", "path", "active_from", "active_until", "random_walk"});
    Intruder in;
    const auto& id = require(item, where, "id");
    if (!id.is_string()) fail(where + "/id", "expected string");
    in.id = id.get<std::string>();
    if (!ids.insert(in.id).second) fail(where + "/id", "duplicate intruder id '" + in.id + "'");
    in.active_from = as_int(require(item, where, "active_from"), where + "/active_from");
    in.active_until = as_int(require(item, where, "active_until"), where + "/active_until");
    if (in.active_until < in.active_from) fail(where, "active_until precedes active_from");
    if (auto rw = item.find("random_walk"); rw != item.end()) {
      if (!rw->is_boolean()) fail(where + "/random_walk", "expected boolean");
      in.random_walk = rw->get<bool>();
    }
    const auto& path = require(item, where, "path");
    if (!path.is_array() || path.empty()) fail(where + "/path", "expected non-empty array of cells");
    for (std::size_t k = 0; k < path.size(); ++k) {
      const std::string pw = where + "/path/" + std::to_string(k);
      Cell c = as_cell(path[k], pw);
      if (!w.in_bounds(c)) fail(pw, "intruder cell out of bounds");
      if (w.at(c) == CellKind::Obstacle) fail(pw, "intruder cell is an obstacle");
      if (!in.path.empty()) {
        const Cell prev = in.path.back();
        if (std::abs(prev.x - c.x) + std::abs(prev.y - c.y) != 1) fail(pw, "path cells must be 4-adjacent");
      }
      in.path.push_back(c);
    }
    if (in.random_walk && in.path.size() != 1) fail(where + "/path", "random-walk intruders take a single start cell");
    in.position = in.path.front();
    w.intruders.push_back(std::move(in));
  }

  const auto& fires = as_array(doc, "", "fires");
  for (std::size_t i = 0; i < fires.size(); ++i) {
    const std::string where = "/fires/" + std::to_string(i);
    const auto& item = fires[i];
    if (!item.is_object()) fail(where, "expected object");
    reject_unknown_keys(item, where, {"cell", "ignition_tick"});
    Fire f;
    f.cell = as_cell(require(item, where, "cell"), where + "/cell");
    if (!w.in_bounds(f.cell)) fail(where + "/cell", "fire out of bounds");
    f.ignition_tick = as_int(require(item, where, "ignition_tick"), where + "/ignition_tick");
    w.fires.push_back(f);
  }
  return sc;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_scenario(ss.str());
}

}  // namespace sentinel::world
