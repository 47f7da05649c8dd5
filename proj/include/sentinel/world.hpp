#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sentinel/vision.hpp"

namespace sentinel::world {

enum class Heading : std::uint8_t { N = 0, E = 1, S = 2, W = 3 };
enum class CellKind : std::uint8_t { Empty = 0, Obstacle = 1 };
enum class Move : std::uint8_t { Forward, Backward, TurnLeft, TurnRight };

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

struct RobotPose {
  int x = 0;
  int y = 0;
  Heading heading = Heading::N;
  bool operator==(const RobotPose&) const = default;
};

/// Unit step for a heading. North decreases y.
Cell heading_delta(Heading h);
Heading turn_left(Heading h);
Heading turn_right(Heading h);
Heading opposite(Heading h);

std::string_view to_string(Heading h);
std::optional<Heading> parse_heading(std::string_view s);
std::string_view to_string(Move m);
std::optional<Move> parse_move(std::string_view s);

struct Intruder {
  std::string id;
  std::vector<Cell> path;  // random-walk intruders use path[0] as the start cell
  bool random_walk = false;
  std::int64_t active_from = 0;
  std::int64_t active_until = 0;

  // Simulation state.
  Cell position{};
  std::size_t path_index = 0;
  bool operator==(const Intruder&) const = default;
};

struct Fire {
  Cell cell{};
  std::int64_t ignition_tick = 0;
  bool operator==(const Fire&) const = default;
};

struct SensorReading {
  double smoke_ppm = 0.0;
  double temperature_c = 0.0;
  int proximity_front = 0;
  int proximity_rear = 0;
  std::int64_t tick = 0;
};

struct EnvironmentConfig {
  double ambient_smoke_ppm = 10.0;
  double ambient_temperature_c = 21.0;
  double fire_smoke_ppm = 500.0;
  double fire_temperature_c = 60.0;
  int proximity_max_range = 8;
  bool operator==(const EnvironmentConfig&) const = default;
};

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic grid world. Value type: copying it forks the simulation.
struct WorldGrid {
  int width = 0;
  int height = 0;
  std::vector<CellKind> cells;
  std::vector<Fire> fires;
  std::vector<Intruder> intruders;
  std::int64_t tick = 0;
  std::uint64_t rng_seed = 0;
  std::mt19937_64 rng;
  EnvironmentConfig env;

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  CellKind at(Cell c) const { return cells[static_cast<std::size_t>(c.y) * width + c.x]; }
  bool is_free(Cell c) const { return in_bounds(c) && at(c) == CellKind::Empty; }
  bool is_burning(const Fire& f) const { return f.ignition_tick <= tick; }
  bool intruder_active(const Intruder& i) const { return tick >= i.active_from && tick <= i.active_until; }

  bool operator==(const WorldGrid&) const = default;
};

struct Scenario {
  WorldGrid world;
  RobotPose robot;
};

/// Parses the JSON scenario format. Errors carry the offending JSON path.
Scenario load_scenario(std::string_view text);
Scenario load_scenario_file(const std::string& path);

/// Advances the world by one tick.
WorldGrid step_world(WorldGrid world);
void step_in_place(WorldGrid& world);

inline constexpr int kViewSize = 32;
inline constexpr std::uint8_t kPixelOutside = 0;
inline constexpr std::uint8_t kPixelEmpty = 50;
inline constexpr std::uint8_t kPixelObstacle = 200;
inline constexpr std::uint8_t kPixelFire = 230;
inline constexpr std::uint8_t kPixelIntruder = 255;

/// World cell shown at (col, row) of the camera view. Row 31 is the row
/// directly in front of the robot; column 16 is straight ahead.
Cell view_cell(const RobotPose& pose, int col, int row);

vision::Frame render_frame(const WorldGrid& world, const RobotPose& pose, std::uint64_t frame_index = 0,
                           std::uint64_t timestamp_ms = 0);

SensorReading read_sensors(const WorldGrid& world, const RobotPose& pose);

/// Distance in free cells from pose along `dir` to the nearest obstacle or
/// boundary, saturating at `max_range`.
int ray_scan(const WorldGrid& world, Cell from, Heading dir, int max_range);

/// Result of a move request. `blocked` leaves the pose unchanged.
struct MoveResult {
  RobotPose pose;
  bool blocked = false;
};

MoveResult apply_move(const WorldGrid& world, const RobotPose& pose, Move move);

}  // namespace sentinel::world
