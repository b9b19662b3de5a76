#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "refgrid/level.hpp"
#include "refgrid/objects.hpp"
#include "refgrid/types.hpp"

namespace refgrid {

struct Cell {
  std::optional<WorldObject> object;
  CellTiles tiles;
  friend bool operator==(const Cell&, const Cell&) = default;
};

enum class EventKind : std::uint8_t {
  turned_left,
  turned_right,
  moved,
  bumped,
  pushed,
  picked_up,
  dropped,
  door_opened,
  door_closed,
  door_unlocked,
  waited,
  drifted,
  dried,
  fire_extinguished,
  flood_rose,
  plate_opened_door,
  plate_closed_door,
};

std::string_view to_string(EventKind k);

/// Something that happened during one step, in the order it happened.
struct Event {
  EventKind kind = EventKind::waited;
  std::optional<WorldObject> object;
  Position from;
  Position to;
  friend bool operator==(const Event&, const Event&) = default;
};

/// Seeded placement generator. std::mt19937_64 output is fixed by the standard;
/// the distribution on top of it is ours so draws match across standard libraries.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}
  /// Uniform integer in [0, n) by rejection.
  std::uint64_t uniform_below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

class World {
 public:
  /// Builds the initial state. Throws LevelError when the level is invalid or a
  /// random set cannot be placed.
  static World create(const LevelSpec& level, std::uint64_t seed);

  /// Applies one action and one mechanics tick. Total: impossible actions are no-ops.
  void step(Action action);
  /// Runs `script` on a copy; this world is untouched.
  World simulate(const std::vector<Action>& script) const;

  int width() const { return width_; }
  int height() const { return height_; }
  bool in_bounds(Position p) const {
    return p.col >= 0 && p.row >= 0 && p.col < width_ && p.row < height_;
  }
  const Cell& cell(Position p) const { return cells_.at(index(p)); }
  const Pose& agent() const { return agent_; }
  const std::optional<WorldObject>& inventory() const { return inventory_; }
  void set_inventory(std::optional<WorldObject> item) { inventory_ = std::move(item); }
  int step_count() const { return step_count_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Action>& history() const { return history_; }
  const LevelMeta& meta() const { return meta_; }
  const std::vector<Event>& last_events() const { return last_events_; }

  std::optional<Position> door_position(const std::string& id) const;
  /// Empty when the door at `p` has no identifier.
  std::string door_id_at(Position p) const;
  const std::map<std::string, Position>& doors() const { return door_ids_; }

  /// Whether the agent could stand on `p` right now.
  bool passable(Position p) const;
  /// Doors driven by pressure plates can change without the agent acting.
  bool plate_linked(Position door) const;

  std::size_t object_count() const;

  /// Full state including history; two worlds with equal JSON are equal.
  nlohmann::json to_json() const;
  /// Stable 64-bit hash of to_json(), hex encoded.
  std::string fingerprint() const;
  /// Omniscient map: one row per line, "@." at the agent, tile codes on empty cells.
  std::string render_full() const;

  /// Throws std::logic_error if a structural invariant is broken.
  void check_invariants() const;

  friend bool operator==(const World&, const World&) = default;

 private:
  std::size_t index(Position p) const { return static_cast<std::size_t>(p.row * width_ + p.col); }
  Cell& mut(Position p) { return cells_.at(index(p)); }

  void apply_action(Action a);
  void drift_rivers(std::vector<Position>& displaced);
  void update_wetness(const std::vector<Position>& displaced);
  void activate_floods(int step);
  void check_fires();
  void resolve_plates();
  bool weighted(Position p) const;

  int width_ = 0;
  int height_ = 0;
  std::vector<Cell> cells_;
  Pose agent_;
  std::optional<WorldObject> inventory_;
  int step_count_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<Action> history_;
  LevelMeta meta_;
  std::map<std::string, Position> door_ids_;
  std::map<Position, DoorState> door_rest_;
  std::vector<Event> last_events_;
};

inline World step(World w, Action a) {
  w.step(a);
  return w;
}

/// Map code for an object-free cell: "^^" fire, "~~" active flood, ",," dormant
/// flood, river arrows, "_c"/"_t"/"_T" plates, ".." otherwise. River arrows point
/// in the view frame when `facing` is given, in the map frame otherwise.
std::string tile_code(const CellTiles& tiles, std::optional<Direction> facing = std::nullopt);

}  // namespace refgrid
