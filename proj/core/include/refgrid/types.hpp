#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace refgrid {

enum class Direction : std::uint8_t { north, east, south, west };

enum class Color : std::uint8_t { red, green, blue, yellow, purple, grey };

enum class ObjectKind : std::uint8_t {
  wall,
  floor,
  door,
  key,
  ball,
  box,
  boulder,
  goal,
  notice_board,
  signpost,
};

enum class DoorState : std::uint8_t { open, closed, locked };

enum class Condition : std::uint8_t { dry, wet, soaked };

/// MiniGrid-compatible action codes.
enum class Action : std::uint8_t {
  turn_left = 0,
  turn_right = 1,
  forward = 2,
  pickup = 3,
  drop = 4,
  toggle = 5,
  wait = 6,
};

inline constexpr int kActionCount = 7;

struct Position {
  int col = 0;
  int row = 0;

  friend auto operator<=>(const Position&, const Position&) = default;
};

struct Offset {
  int dcol = 0;
  int drow = 0;

  friend bool operator==(const Offset&, const Offset&) = default;
};

inline Position operator+(Position p, Offset o) { return {p.col + o.dcol, p.row + o.drow}; }
inline Offset operator*(int k, Offset o) { return {k * o.dcol, k * o.drow}; }

struct Pose {
  Position pos;
  Direction facing = Direction::north;

  friend bool operator==(const Pose&, const Pose&) = default;
};

// Thrown when a name or code does not map onto one of the enumerations above.
class UnknownName : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Offset forward_offset(Direction d);
/// Unit vector pointing to the agent's right when facing `d`.
Offset right_offset(Direction d);
Direction turn_left(Direction d);
Direction turn_right(Direction d);

std::string_view to_string(Direction d);
std::string_view to_string(Color c);
std::string_view to_string(ObjectKind k);
std::string_view to_string(DoorState s);
std::string_view to_string(Condition c);
std::string_view to_string(Action a);

Direction parse_direction(std::string_view s);
Color parse_color(std::string_view s);
ObjectKind parse_object_kind(std::string_view s);
DoorState parse_door_state(std::string_view s);
Condition parse_condition(std::string_view s);
/// Accepts the action name or its integer code.
Action parse_action(std::string_view s);

/// Validates `code` against 0..6.
std::optional<Action> action_from_code(int code);
inline int action_code(Action a) { return static_cast<int>(a); }

// Single-character codes shared by level files and the grid serializer.
char color_char(Color c);
std::optional<Color> color_from_char(char c);
char kind_char(ObjectKind k);
std::optional<ObjectKind> kind_from_char(char c);

inline constexpr std::array<Color, 6> kAllColors = {Color::red,    Color::green,  Color::blue,
                                                    Color::yellow, Color::purple, Color::grey};
inline constexpr std::array<Direction, 4> kAllDirections = {Direction::north, Direction::east,
                                                            Direction::south, Direction::west};

}  // namespace refgrid
