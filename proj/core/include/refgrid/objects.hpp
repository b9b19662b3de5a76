#pragma once

#include <optional>
#include <string>
#include <variant>

#include "refgrid/types.hpp"

namespace refgrid {

struct WorldObject {
  ObjectKind kind = ObjectKind::ball;
  Color color = Color::grey;
  DoorState door_state = DoorState::closed;  // doors only
  Condition condition = Condition::dry;
  int wet_turns_remaining = 0;
  std::string text;                       // notice boards and signposts only
  std::optional<double> stated_accuracy;  // signposts only

  friend bool operator==(const WorldObject&, const WorldObject&) = default;
};

WorldObject make_wall();
WorldObject make_object(ObjectKind kind, Color color);

bool is_portable(ObjectKind k);
bool is_pushable(ObjectKind k);
bool is_testimony(ObjectKind k);
/// Whether the agent may stand on a cell holding this object.
bool is_walkable(const WorldObject& o);
/// Whether the object lets the agent see past its cell.
bool is_transparent(const WorldObject& o);
bool is_wet(const WorldObject& o);

/// Two-character code, e.g. "bB" for a blue ball, "##" for a wall.
std::string object_code(const WorldObject& o);
/// "blue ball", "grey notice board", "wall".
std::string describe(const WorldObject& o);

// ---- tile overlays ---------------------------------------------------------

struct River {
  Direction direction = Direction::east;
  int speed = 1;
  friend bool operator==(const River&, const River&) = default;
};

struct Fire {
  bool active = true;
  friend bool operator==(const Fire&, const Fire&) = default;
};

struct Flood {
  int rise_step = 0;
  bool active = false;
  friend bool operator==(const Flood&, const Flood&) = default;
};

enum class PlateEffect : std::uint8_t { continuous, trigger };

struct PressurePlate {
  PlateEffect effect = PlateEffect::continuous;
  std::string link;  // door identifier
  bool fired = false;
  friend bool operator==(const PressurePlate&, const PressurePlate&) = default;
};

struct DarkZone {
  friend bool operator==(const DarkZone&, const DarkZone&) = default;
};

using TileOverlay = std::variant<River, Fire, Flood, PressurePlate, DarkZone>;

std::string_view overlay_kind_name(const TileOverlay& t);
std::string_view to_string(PlateEffect e);
PlateEffect parse_plate_effect(std::string_view s);

/// All overlays stacked on one cell; at most one of each variant.
struct CellTiles {
  std::optional<River> river;
  std::optional<Fire> fire;
  std::optional<Flood> flood;
  std::optional<PressurePlate> plate;
  bool dark = false;

  bool empty() const { return !river && !fire && !flood && !plate && !dark; }
  bool burning() const { return fire && fire->active; }
  bool flooded() const { return flood && flood->active; }
  /// Returns false if an overlay of the same variant is already present.
  bool add(const TileOverlay& t);

  friend bool operator==(const CellTiles&, const CellTiles&) = default;
};

}  // namespace refgrid
