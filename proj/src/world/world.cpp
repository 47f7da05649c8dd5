#include "sentinel/world.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>

namespace sentinel::world {

Cell heading_delta(Heading h) {
  switch (h) {
    case Heading::N: return {0, -1};
    case Heading::E: return {1, 0};
    case Heading::S: return {0, 1};
    case Heading::W: return {-1, 0};
  }
  return {0, 0};
}

Heading turn_left(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 3) % 4); }
Heading turn_right(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 1) % 4); }
Heading opposite(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 2) % 4); }

std::string_view to_string(Heading h) {
  static constexpr std::array<std::string_view, 4> kNames{"N", "E", "S", "W"};
  return kNames[static_cast<int>(h)];
}

std::optional<Heading> parse_heading(std::string_view s) {
  if (s == "N") return Heading::N;
  if (s == "E") return Heading::E;
  if (s == "S") return Heading::S;
  if (s == "W") return Heading::W;
  return std::nullopt;
}

std::string_view to_string(Move m) {
  switch (m) {
    case Move::Forward: return "Forward";
    case Move::Backward: return "Backward";
    case Move::TurnLeft: return "TurnLeft";
    case Move::TurnRight: return "TurnRight";
  }
  return "?";
}

std::optional<Move> parse_move(std::string_view s) {
  if (s == "Forward") return Move::Forward;
  if (s == "Backward") return Move::Backward;
  if (s == "TurnLeft") return Move::TurnLeft;
  if (s == "TurnRight") return Move::TurnRight;
  return std::nullopt;
}

namespace {

void advance_intruder(WorldGrid& world, Intruder& intruder) {
  if (!intruder.random_walk) {
    if (intruder.path_index + 1 < intruder.path.size()) ++intruder.path_index;
    intruder.position = intruder.path[intruder.path_index];
    return;
  }
  static constexpr std::array<Heading, 4> kOrder{Heading::N, Heading::E, Heading::S, Heading::W};
  std::array<Cell, 4> options{};
  std::size_t n = 0;
  for (auto h : kOrder) {
    auto d = heading_delta(h);
    Cell next{intruder.position.x + d.x, intruder.position.y + d.y};
    if (world.is_free(next)) options[n++] = next;
  }
  // One draw per active tick, even when boxed in, so the stream stays aligned.
  const auto draw = world.rng();
  if (n > 0) intruder.position = options[draw % n];
}

}  // namespace

void step_in_place(WorldGrid& world) {
  world.tick += 1;
  for (auto& intruder : world.intruders) {
    // Movement starts on the tick after activation; before that the intruder sits at its start cell.
    if (world.tick > intruder.active_from && world.tick <= intruder.active_until) advance_intruder(world, intruder);
  }
}

WorldGrid step_world(WorldGrid world) {
  step_in_place(world);
  return world;
}

Cell view_cell(const RobotPose& pose, int col, int row) {
  const Cell fwd = heading_delta(pose.heading);
  const Cell right = heading_delta(turn_right(pose.heading));
  const int ahead = kViewSize - row;
  const int lateral = col - kViewSize / 2;
  return {pose.x + ahead * fwd.x + lateral * right.x, pose.y + ahead * fwd.y + lateral * right.y};
}

vision::Frame render_frame(const WorldGrid& world, const RobotPose& pose, std::uint64_t frame_index,
                           std::uint64_t timestamp_ms) {
  // Paint the whole world once, then sample the view window out of it.
  std::vector<std::uint8_t> canvas(world.cells.size());
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    canvas[i] = world.cells[i] == CellKind::Obstacle ? kPixelObstacle : kPixelEmpty;
  }
  auto paint = [&](Cell c, std::uint8_t v) {
    if (world.in_bounds(c)) canvas[static_cast<std::size_t>(c.y) * world.width + c.x] = v;
  };
  for (const auto& fire : world.fires) {
    if (world.is_burning(fire)) paint(fire.cell, kPixelFire);
  }
  for (const auto& intruder : world.intruders) {
    if (world.intruder_active(intruder)) paint(intruder.position, kPixelIntruder);
  }

  vision::Frame frame(kViewSize, kViewSize, kPixelOutside, frame_index, timestamp_ms);
  for (int row = 0; row < kViewSize; ++row) {
    for (int col = 0; col < kViewSize; ++col) {
      const Cell c = view_cell(pose, col, row);
      if (world.in_bounds(c)) frame.at(col, row) = canvas[static_cast<std::size_t>(c.y) * world.width + c.x];
    }
  }
  return frame;
}

int ray_scan(const WorldGrid& world, Cell from, Heading dir, int max_range) {
  const Cell d = heading_delta(dir);
  int free = 0;
  Cell c = from;
  while (free < max_range) {
    c = {c.x + d.x, c.y + d.y};
    if (!world.is_free(c)) break;
    ++free;
  }
  return free;
}

SensorReading read_sensors(const WorldGrid& world, const RobotPose& pose) {
  SensorReading r;
  r.tick = world.tick;
  r.smoke_ppm = world.env.ambient_smoke_ppm;
  r.temperature_c = world.env.ambient_temperature_c;
  for (const auto& fire : world.fires) {
    if (!world.is_burning(fire)) continue;
    const int d = std::max(std::abs(fire.cell.x - pose.x), std::abs(fire.cell.y - pose.y));
    r.smoke_ppm += world.env.fire_smoke_ppm / (1.0 + d);
    r.temperature_c += world.env.fire_temperature_c / (1.0 + d);
  }
  const Cell here{pose.x, pose.y};
  r.proximity_front = ray_scan(world, here, pose.heading, world.env.proximity_max_range);
  r.proximity_rear = ray_scan(world, here, opposite(pose.heading), world.env.proximity_max_range);
  return r;
}

MoveResult apply_move(const WorldGrid& world, const RobotPose& pose, Move move) {
  RobotPose next = pose;
  switch (move) {
    case Move::TurnLeft:
      next.heading = turn_left(pose.heading);
      return {next, false};
    case Move::TurnRight:
      next.heading = turn_right(pose.heading);
      return {next, false};
    case Move::Forward:
    case Move::Backward: {
      const Heading dir = move == Move::Forward ? pose.heading : opposite(pose.heading);
      const Cell d = heading_delta(dir);
      const Cell target{pose.x + d.x, pose.y + d.y};
      if (!world.is_free(target)) return {pose, true};
      next.x = target.x;
      next.y = target.y;
      return {next, false};
    }
  }
  return {pose, true};
}

}  // namespace sentinel::world
