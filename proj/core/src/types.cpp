#include "refgrid/types.hpp"

#include <charconv>
#include <string>

namespace refgrid {

namespace {

template <typename Enum, std::size_t N>
Enum lookup(std::string_view s, const std::array<std::pair<std::string_view, Enum>, N>& table,
            std::string_view what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw UnknownName("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

constexpr std::array<std::pair<std::string_view, Direction>, 4> kDirectionNames = {{
    {"north", Direction::north},
    {"east", Direction::east},
    {"south", Direction::south},
    {"west", Direction::west},
}};

constexpr std::array<std::pair<std::string_view, Color>, 6> kColorNames = {{
    {"red", Color::red},
    {"green", Color::green},
    {"blue", Color::blue},
    {"yellow", Color::yellow},
    {"purple", Color::purple},
    {"grey", Color::grey},
}};

constexpr std::array<std::pair<std::string_view, ObjectKind>, 10> kKindNames = {{
    {"wall", ObjectKind::wall},
    {"floor", ObjectKind::floor},
    {"door", ObjectKind::door},
    {"key", ObjectKind::key},
    {"ball", ObjectKind::ball},
    {"box", ObjectKind::box},
    {"boulder", ObjectKind::boulder},
    {"goal", ObjectKind::goal},
    {"notice board", ObjectKind::notice_board},
    {"signpost", ObjectKind::signpost},
}};

constexpr std::array<std::pair<std::string_view, DoorState>, 3> kDoorStateNames = {{
    {"open", DoorState::open},
    {"closed", DoorState::closed},
    {"locked", DoorState::locked},
}};

constexpr std::array<std::pair<std::string_view, Condition>, 3> kConditionNames = {{
    {"dry", Condition::dry},
    {"wet", Condition::wet},
    {"soaked", Condition::soaked},
}};

constexpr std::array<std::pair<std::string_view, Action>, 7> kActionNames = {{
    {"turn_left", Action::turn_left},
    {"turn_right", Action::turn_right},
    {"forward", Action::forward},
    {"pickup", Action::pickup},
    {"drop", Action::drop},
    {"toggle", Action::toggle},
    {"wait", Action::wait},
}};

template <typename Enum, std::size_t N>
std::string_view name_of(Enum e, const std::array<std::pair<std::string_view, Enum>, N>& table) {
  for (const auto& [name, value] : table) {
    if (value == e) return name;
  }
  return "?";
}

}  // namespace

Offset forward_offset(Direction d) {
  switch (d) {
    case Direction::north: return {0, -1};
    case Direction::east: return {1, 0};
    case Direction::south: return {0, 1};
    case Direction::west: return {-1, 0};
  }
  return {};
}

Offset right_offset(Direction d) { return forward_offset(turn_right(d)); }

Direction turn_left(Direction d) { return static_cast<Direction>((static_cast<int>(d) + 3) % 4); }
Direction turn_right(Direction d) { return static_cast<Direction>((static_cast<int>(d) + 1) % 4); }

std::string_view to_string(Direction d) { return name_of(d, kDirectionNames); }
std::string_view to_string(Color c) { return name_of(c, kColorNames); }
std::string_view to_string(ObjectKind k) { return name_of(k, kKindNames); }
std::string_view to_string(DoorState s) { return name_of(s, kDoorStateNames); }
std::string_view to_string(Condition c) { return name_of(c, kConditionNames); }
std::string_view to_string(Action a) { return name_of(a, kActionNames); }

Direction parse_direction(std::string_view s) { return lookup(s, kDirectionNames, "direction"); }
Color parse_color(std::string_view s) {
  if (s == "gray") return Color::grey;
  return lookup(s, kColorNames, "color");
}
ObjectKind parse_object_kind(std::string_view s) {
  if (s == "notice_board") return ObjectKind::notice_board;
  return lookup(s, kKindNames, "object kind");
}
DoorState parse_door_state(std::string_view s) { return lookup(s, kDoorStateNames, "door state"); }
Condition parse_condition(std::string_view s) { return lookup(s, kConditionNames, "condition"); }

Action parse_action(std::string_view s) {
  int code = -1;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), code);
  if (ec == std::errc() && ptr == s.data() + s.size()) {
    if (auto a = action_from_code(code)) return *a;
    throw UnknownName("action code out of range: " + std::string(s));
  }
  return lookup(s, kActionNames, "action");
}

std::optional<Action> action_from_code(int code) {
  if (code < 0 || code >= kActionCount) return std::nullopt;
  return static_cast<Action>(code);
}

char color_char(Color c) {
  switch (c) {
    case Color::red: return 'r';
    case Color::green: return 'g';
    case Color::blue: return 'b';
    case Color::yellow: return 'y';
    case Color::purple: return 'p';
    case Color::grey: return 'e';
  }
  return '?';
}

std::optional<Color> color_from_char(char c) {
  switch (c) {
    case 'r': return Color::red;
    case 'g': return Color::green;
    case 'b': return Color::blue;
    case 'y': return Color::yellow;
    case 'p': return Color::purple;
    case 'e': return Color::grey;
    default: return std::nullopt;
  }
}

char kind_char(ObjectKind k) {
  switch (k) {
    case ObjectKind::wall: return '#';
    case ObjectKind::floor: return '.';
    case ObjectKind::door: return 'D';
    case ObjectKind::key: return 'K';
    case ObjectKind::ball: return 'B';
    case ObjectKind::box: return 'X';
    case ObjectKind::boulder: return 'O';
    case ObjectKind::goal: return 'G';
    case ObjectKind::notice_board: return 'N';
    case ObjectKind::signpost: return 'S';
  }
  return '?';
}

std::optional<ObjectKind> kind_from_char(char c) {
  switch (c) {
    case 'D': return ObjectKind::door;
    case 'K': return ObjectKind::key;
    case 'B': return ObjectKind::ball;
    case 'X': return ObjectKind::box;
    case 'O': return ObjectKind::boulder;
    case 'G': return ObjectKind::goal;
    case 'N': return ObjectKind::notice_board;
    case 'S': return ObjectKind::signpost;
    default: return std::nullopt;
  }
}

}  // namespace refgrid
