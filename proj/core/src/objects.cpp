#include "refgrid/objects.hpp"

namespace refgrid {

WorldObject make_wall() { return make_object(ObjectKind::wall, Color::grey); }

WorldObject make_object(ObjectKind kind, Color color) {
  WorldObject o;
  o.kind = kind;
  o.color = color;
  return o;
}

bool is_portable(ObjectKind k) {
  return k == ObjectKind::key || k == ObjectKind::ball || k == ObjectKind::box;
}

bool is_pushable(ObjectKind k) { return k == ObjectKind::boulder; }

bool is_testimony(ObjectKind k) {
  return k == ObjectKind::notice_board || k == ObjectKind::signpost;
}

bool is_walkable(const WorldObject& o) {
  switch (o.kind) {
    case ObjectKind::floor:
    case ObjectKind::goal: return true;
    case ObjectKind::door: return o.door_state == DoorState::open;
    default: return false;
  }
}

bool is_transparent(const WorldObject& o) {
  switch (o.kind) {
    case ObjectKind::wall: return false;
    case ObjectKind::door: return o.door_state == DoorState::open;
    default: return true;
  }
}

bool is_wet(const WorldObject& o) { return o.wet_turns_remaining > 0; }

std::string object_code(const WorldObject& o) {
  if (o.kind == ObjectKind::wall) return "##";
  if (o.kind == ObjectKind::floor) return "..";
  return {color_char(o.color), kind_char(o.kind)};
}

std::string describe(const WorldObject& o) {
  if (o.kind == ObjectKind::wall) return "wall";
  if (o.kind == ObjectKind::floor) return "floor";
  return std::string(to_string(o.color)) + " " + std::string(to_string(o.kind));
}

std::string_view overlay_kind_name(const TileOverlay& t) {
  struct Visitor {
    std::string_view operator()(const River&) const { return "river"; }
    std::string_view operator()(const Fire&) const { return "fire"; }
    std::string_view operator()(const Flood&) const { return "flood"; }
    std::string_view operator()(const PressurePlate&) const { return "plate"; }
    std::string_view operator()(const DarkZone&) const { return "dark"; }
  };
  return std::visit(Visitor{}, t);
}

std::string_view to_string(PlateEffect e) {
  return e == PlateEffect::continuous ? "continuous" : "trigger";
}

PlateEffect parse_plate_effect(std::string_view s) {
  if (s == "continuous") return PlateEffect::continuous;
  if (s == "trigger") return PlateEffect::trigger;
  throw UnknownName("unknown plate effect '" + std::string(s) + "'");
}

namespace {

template <typename T>
bool put(std::optional<T>& slot, const T& value) {
  if (slot) return false;
  slot = value;
  return true;
}

}  // namespace

bool CellTiles::add(const TileOverlay& t) {
  struct Visitor {
    CellTiles& tiles;
    bool operator()(const River& r) const { return put(tiles.river, r); }
    bool operator()(const Fire& f) const { return put(tiles.fire, f); }
    bool operator()(const Flood& f) const { return put(tiles.flood, f); }
    bool operator()(const PressurePlate& p) const { return put(tiles.plate, p); }
    bool operator()(const DarkZone&) const {
      if (tiles.dark) return false;
      tiles.dark = true;
      return true;
    }
  };
  return std::visit(Visitor{*this}, t);
}

}  // namespace refgrid
