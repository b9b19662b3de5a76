#pragma once

#include <optional>
#include <string>
#include <vector>

#include "refgrid/world.hpp"

namespace refgrid {

/// One cell of the egocentric view. `world` may lie outside the map.
struct FovCell {
  bool visible = false;
  Position world;
  std::optional<WorldObject> object;
  CellTiles tiles;
  friend bool operator==(const FovCell&, const FovCell&) = default;
};

struct Testimony {
  ObjectKind kind = ObjectKind::notice_board;
  Color color = Color::grey;
  std::string text;
  std::optional<double> accuracy;
  Position world;
  // Set when the object itself is in view.
  std::optional<int> ahead;
  std::optional<int> lateral;
  friend bool operator==(const Testimony&, const Testimony&) = default;
};

/// Egocentric coordinates: `ahead` >= 0 steps in the facing direction, `lateral`
/// negative to the left.
struct EgoPos {
  int ahead = 0;
  int lateral = 0;
  friend auto operator<=>(const EgoPos&, const EgoPos&) = default;
};

/// "L3", "0", "R2".
std::string lateral_label(int lateral);
/// "ahead 2, R3".
std::string ego_label(EgoPos p);

struct Observation {
  ViewSize view;
  std::vector<FovCell> cells;  // row-major by ahead, then lateral from left to right
  Pose pose;
  std::optional<WorldObject> carrying;
  int step_index = 0;
  int segment = 0;
  std::string level_id;
  std::optional<Action> last_action;
  std::vector<Event> events;
  std::vector<Testimony> testimony;

  int half_width() const { return view.width / 2; }
  bool contains(EgoPos p) const {
    return p.ahead >= 0 && p.ahead < view.depth && p.lateral >= -half_width() && p.lateral <= half_width();
  }
  const FovCell& at(EgoPos p) const;
  /// Egocentric position of a world cell if it falls inside the view window.
  std::optional<EgoPos> ego_of(Position world) const;
  /// Whether the world cell is inside the window and visible.
  bool sees(Position world) const;

  friend bool operator==(const Observation&, const Observation&) = default;
};

/// Extracts the field of view. Opaque cells (walls and shut doors unless the
/// level sees through walls, dark zones, off-map cells) stop sight the way
/// MiniGrid's visibility propagation does; dark and off-map cells are never
/// visible themselves.
Observation observe(const World& world, int segment = 0);

/// World position seen at `p` for an agent at `pose`.
Position ego_to_world(const Pose& pose, EgoPos p);

}  // namespace refgrid
