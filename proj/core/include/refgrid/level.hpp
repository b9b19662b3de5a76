#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "refgrid/objects.hpp"
#include "refgrid/types.hpp"

namespace refgrid {

/// Egocentric field of view: `depth` rows ahead (including the agent's own row)
/// by `width` columns, width odd so the agent sits in the middle column.
struct ViewSize {
  int depth = 7;
  int width = 7;
  friend bool operator==(const ViewSize&, const ViewSize&) = default;
};

struct LevelMeta {
  std::string id = "level";
  Position agent_start;
  // nullopt means the facing is drawn from the seed ("agent_dir=random").
  std::optional<Direction> agent_dir = Direction::north;
  ViewSize view_size;
  bool see_through_walls = false;
  int max_steps = 100;
  int soak_duration = 3;
  friend bool operator==(const LevelMeta&, const LevelMeta&) = default;
};

struct OverlayPlacement {
  Position pos;
  TileOverlay overlay;
  friend bool operator==(const OverlayPlacement&, const OverlayPlacement&) = default;
};

struct DoorSetting {
  Position pos;
  std::string id;
  DoorState state = DoorState::closed;
  friend bool operator==(const DoorSetting&, const DoorSetting&) = default;
};

/// Seeded object pool: `count` objects with cell code `code` are scattered over
/// the free cells of the rectangle at world creation.
struct RandomSet {
  Position origin;
  int width = 1;
  int height = 1;
  std::string code;
  int count = 0;
  friend bool operator==(const RandomSet&, const RandomSet&) = default;
};

struct TextEntry {
  std::string text;
  std::optional<double> accuracy;
  friend bool operator==(const TextEntry&, const TextEntry&) = default;
};

struct LevelSpec {
  LevelMeta meta;
  int width = 0;
  int height = 0;
  std::vector<std::string> cells;  // row-major two-character codes
  std::vector<OverlayPlacement> overlays;
  std::vector<DoorSetting> doors;
  std::vector<RandomSet> randomized_sets;  // applied in declaration order
  std::map<Position, TextEntry> texts;

  const std::string& code_at(Position p) const { return cells.at(index(p)); }
  std::string& code_at(Position p) { return cells.at(index(p)); }
  bool in_bounds(Position p) const {
    return p.col >= 0 && p.row >= 0 && p.col < width && p.row < height;
  }
  std::size_t index(Position p) const { return static_cast<std::size_t>(p.row * width + p.col); }

  friend bool operator==(const LevelSpec&, const LevelSpec&) = default;
};

enum class LevelErrorCode {
  syntax,
  bad_section,
  bad_meta,
  ragged_grid,
  bad_cell,
  unknown_code,
  missing_agent,
  duplicate_agent,
  perimeter,
  bad_overlay,
  out_of_bounds,
  duplicate_overlay,
  dangling_link,
  bad_text,
  missing_text,
  blocked_start,
  insufficient_cells,
};

std::string_view to_string(LevelErrorCode c);

/// Parse or validation failure. `line`/`column` are 1-based text positions when
/// the level came from text, 0 otherwise; `cell` names the offending grid cell
/// when there is one.
class LevelError : public std::runtime_error {
 public:
  LevelError(LevelErrorCode code, std::string message, int line = 0, int column = 0,
             std::optional<Position> cell = std::nullopt);

  LevelErrorCode code() const { return code_; }
  int line() const { return line_; }
  int column() const { return column_; }
  const std::optional<Position>& cell() const { return cell_; }
  const std::string& detail() const { return detail_; }

 private:
  LevelErrorCode code_;
  int line_;
  int column_;
  std::optional<Position> cell_;
  std::string detail_;
};

LevelSpec parse_level(std::string_view text);
std::string emit_level(const LevelSpec& spec);

/// Throws LevelError on the first violated constraint.
void validate_level(const LevelSpec& spec);

/// Sorts overlays and doors into canonical order. parse_level output is always
/// canonical.
void canonicalize(LevelSpec& spec);

LevelSpec load_level_file(const std::string& path);

/// "bB" -> blue ball. Accepts every object code a level grid may contain
/// except floor, wall and agent.
std::optional<WorldObject> object_from_code(std::string_view code);
bool is_known_cell_code(std::string_view code);

std::string format_view_size(const ViewSize& v);

}  // namespace refgrid
