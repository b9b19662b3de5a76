#include "refgrid/level.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace refgrid {

LevelError::LevelError(LevelErrorCode code, std::string message, int line, int column,
                       std::optional<Position> cell)
    : std::runtime_error([&] {
        std::string where;
        if (line > 0) {
          where = fmt::format("line {}, column {}: ", line, column);
        } else if (cell) {
          where = fmt::format("cell ({},{}): ", cell->col, cell->row);
        }
        return fmt::format("{}{} [{}]", where, message, to_string(code));
      }()),
      code_(code),
      line_(line),
      column_(column),
      cell_(cell),
      detail_(std::move(message)) {}

std::string_view to_string(LevelErrorCode c) {
  switch (c) {
    case LevelErrorCode::syntax: return "syntax";
    case LevelErrorCode::bad_section: return "bad_section";
    case LevelErrorCode::bad_meta: return "bad_meta";
    case LevelErrorCode::ragged_grid: return "ragged_grid";
    case LevelErrorCode::bad_cell: return "bad_cell";
    case LevelErrorCode::unknown_code: return "unknown_code";
    case LevelErrorCode::missing_agent: return "missing_agent";
    case LevelErrorCode::duplicate_agent: return "duplicate_agent";
    case LevelErrorCode::perimeter: return "perimeter";
    case LevelErrorCode::bad_overlay: return "bad_overlay";
    case LevelErrorCode::out_of_bounds: return "out_of_bounds";
    case LevelErrorCode::duplicate_overlay: return "duplicate_overlay";
    case LevelErrorCode::dangling_link: return "dangling_link";
    case LevelErrorCode::bad_text: return "bad_text";
    case LevelErrorCode::missing_text: return "missing_text";
    case LevelErrorCode::blocked_start: return "blocked_start";
    case LevelErrorCode::insufficient_cells: return "insufficient_cells";
  }
  return "unknown";
}

std::optional<WorldObject> object_from_code(std::string_view code) {
  if (code.size() != 2) return std::nullopt;
  auto color = color_from_char(code[0]);
  auto kind = kind_from_char(code[1]);
  if (!color || !kind) return std::nullopt;
  return make_object(*kind, *color);
}

bool is_known_cell_code(std::string_view code) {
  return code == ".." || code == "##" || code == "@." || object_from_code(code).has_value();
}

std::string format_view_size(const ViewSize& v) {
  if (v.depth == v.width) return std::to_string(v.width);
  return fmt::format("{}x{}", v.depth, v.width);
}

namespace {

struct TextPos {
  int line = 0;
  int column = 0;
};

// Maps spec elements back to where they were written. Empty for specs built in
// code, in which case errors carry the grid cell instead.
struct SourceMap {
  std::vector<int> grid_lines;
  std::vector<std::vector<int>> grid_columns;
  std::vector<TextPos> overlays;
  std::vector<TextPos> doors;
  std::vector<TextPos> randoms;
  std::map<Position, TextPos> texts;
  std::map<std::string, TextPos> meta;

  TextPos cell(Position p) const {
    if (p.row >= 0 && p.row < static_cast<int>(grid_lines.size())) {
      const auto& cols = grid_columns[static_cast<std::size_t>(p.row)];
      int col = (p.col >= 0 && p.col < static_cast<int>(cols.size()))
                    ? cols[static_cast<std::size_t>(p.col)]
                    : 1;
      return {grid_lines[static_cast<std::size_t>(p.row)], col};
    }
    return {};
  }
};

[[noreturn]] void fail(LevelErrorCode code, std::string msg, TextPos at,
                       std::optional<Position> cell = std::nullopt) {
  throw LevelError(code, std::move(msg), at.line, at.column, cell);
}

TextPos lookup_pos(const std::vector<TextPos>& v, std::size_t i) {
  return i < v.size() ? v[i] : TextPos{};
}

bool is_testimony_code(std::string_view code) {
  return code.size() == 2 && (code[1] == 'N' || code[1] == 'S');
}

void validate_impl(const LevelSpec& spec, const SourceMap& src) {
  const auto& m = spec.meta;
  auto meta_pos = [&](const std::string& key) {
    auto it = src.meta.find(key);
    return it == src.meta.end() ? TextPos{} : it->second;
  };
  if (spec.width < 1 || spec.height < 1 ||
      spec.cells.size() != static_cast<std::size_t>(spec.width * spec.height)) {
    fail(LevelErrorCode::ragged_grid, "grid dimensions do not match cell count", {});
  }
  if (m.id.empty()) fail(LevelErrorCode::bad_meta, "id must not be empty", meta_pos("id"));
  if (m.view_size.width < 1 || m.view_size.width % 2 == 0 || m.view_size.depth < 1) {
    fail(LevelErrorCode::bad_meta, "view_size width must be odd and depth positive",
         meta_pos("view_size"));
  }
  if (m.max_steps < 1) fail(LevelErrorCode::bad_meta, "max_steps must be >= 1", meta_pos("max_steps"));
  if (m.soak_duration < 1) {
    fail(LevelErrorCode::bad_meta, "soak_duration must be >= 1", meta_pos("soak_duration"));
  }

  std::optional<Position> agent;
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      Position p{c, r};
      const auto& code = spec.code_at(p);
      if (!is_known_cell_code(code)) {
        fail(LevelErrorCode::unknown_code, fmt::format("unknown cell code '{}'", code), src.cell(p), p);
      }
      bool border = r == 0 || c == 0 || r == spec.height - 1 || c == spec.width - 1;
      if (border && code != "##") {
        fail(LevelErrorCode::perimeter, "perimeter cells must be walls", src.cell(p), p);
      }
      if (code == "@.") {
        if (agent) fail(LevelErrorCode::duplicate_agent, "more than one agent start", src.cell(p), p);
        agent = p;
      }
    }
  }
  if (!agent) fail(LevelErrorCode::missing_agent, "grid has no agent start '@.'", {1, 1});
  if (m.agent_start != *agent) {
    fail(LevelErrorCode::bad_meta, "agent_start does not match the '@.' cell", meta_pos("agent_start"),
         m.agent_start);
  }

  std::set<std::string> door_ids;
  std::set<Position> door_cells;
  for (std::size_t i = 0; i < spec.doors.size(); ++i) {
    const auto& d = spec.doors[i];
    TextPos at = lookup_pos(src.doors, i);
    if (!spec.in_bounds(d.pos)) fail(LevelErrorCode::out_of_bounds, "door setting outside grid", at, d.pos);
    const auto& code = spec.code_at(d.pos);
    if (code.size() != 2 || code[1] != 'D') {
      fail(LevelErrorCode::bad_overlay, "door setting on a cell without a door", at, d.pos);
    }
    if (!door_cells.insert(d.pos).second) {
      fail(LevelErrorCode::duplicate_overlay, "door configured twice", at, d.pos);
    }
    if (!d.id.empty() && !door_ids.insert(d.id).second) {
      fail(LevelErrorCode::bad_overlay, fmt::format("duplicate door id '{}'", d.id), at, d.pos);
    }
  }

  std::map<Position, CellTiles> tiles;
  for (std::size_t i = 0; i < spec.overlays.size(); ++i) {
    const auto& o = spec.overlays[i];
    TextPos at = lookup_pos(src.overlays, i);
    if (!spec.in_bounds(o.pos)) fail(LevelErrorCode::out_of_bounds, "overlay outside grid", at, o.pos);
    const auto& code = spec.code_at(o.pos);
    if (code == "##" || (code.size() == 2 && code[1] == 'D') || is_testimony_code(code)) {
      fail(LevelErrorCode::bad_overlay, "overlays must sit on open cells", at, o.pos);
    }
    if (!tiles[o.pos].add(o.overlay)) {
      fail(LevelErrorCode::duplicate_overlay,
           fmt::format("second {} overlay on one cell", overlay_kind_name(o.overlay)), at, o.pos);
    }
    if (const auto* river = std::get_if<River>(&o.overlay); river && river->speed < 1) {
      fail(LevelErrorCode::bad_overlay, "river speed must be >= 1", at, o.pos);
    }
    if (const auto* flood = std::get_if<Flood>(&o.overlay); flood && flood->rise_step < 0) {
      fail(LevelErrorCode::bad_overlay, "flood rise_step must be >= 0", at, o.pos);
    }
    if (const auto* plate = std::get_if<PressurePlate>(&o.overlay)) {
      if (!door_ids.contains(plate->link)) {
        fail(LevelErrorCode::dangling_link, fmt::format("plate links unknown door '{}'", plate->link),
             at, o.pos);
      }
    }
  }
  if (auto it = tiles.find(*agent); it != tiles.end()) {
    const auto& t = it->second;
    if (t.burning() || (t.flood && t.flood->rise_step == 0)) {
      fail(LevelErrorCode::blocked_start, "agent starts on an impassable tile", src.cell(*agent), *agent);
    }
  }

  for (std::size_t i = 0; i < spec.randomized_sets.size(); ++i) {
    const auto& rs = spec.randomized_sets[i];
    TextPos at = lookup_pos(src.randoms, i);
    if (rs.width < 1 || rs.height < 1) fail(LevelErrorCode::bad_overlay, "random set needs w,h >= 1", at);
    Position far{rs.origin.col + rs.width - 1, rs.origin.row + rs.height - 1};
    if (!spec.in_bounds(rs.origin) || !spec.in_bounds(far)) {
      fail(LevelErrorCode::out_of_bounds, "random set rectangle leaves the grid", at, rs.origin);
    }
    auto obj = object_from_code(rs.code);
    if (!obj || obj->kind == ObjectKind::door || is_testimony(obj->kind)) {
      fail(LevelErrorCode::bad_overlay, fmt::format("random set cannot place '{}'", rs.code), at);
    }
    if (rs.count < 0 || rs.count > rs.width * rs.height) {
      fail(LevelErrorCode::insufficient_cells, "random set count exceeds its rectangle", at);
    }
  }

  for (const auto& [pos, entry] : spec.texts) {
    TextPos at;
    if (auto it = src.texts.find(pos); it != src.texts.end()) at = it->second;
    if (!spec.in_bounds(pos)) fail(LevelErrorCode::out_of_bounds, "text placement outside grid", at, pos);
    const auto& code = spec.code_at(pos);
    if (!is_testimony_code(code)) {
      fail(LevelErrorCode::bad_text, "text placed on a cell without a notice board or signpost", at, pos);
    }
    if (entry.text.empty()) fail(LevelErrorCode::bad_text, "testimony text must not be empty", at, pos);
    if (entry.accuracy) {
      if (code[1] != 'S') fail(LevelErrorCode::bad_text, "only signposts carry an accuracy", at, pos);
      if (*entry.accuracy < 0.0 || *entry.accuracy > 1.0) {
        fail(LevelErrorCode::bad_text, "accuracy must lie in [0,1]", at, pos);
      }
    }
  }
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      Position p{c, r};
      if (is_testimony_code(spec.code_at(p)) && !spec.texts.contains(p)) {
        fail(LevelErrorCode::missing_text, "notice board or signpost without text", src.cell(p), p);
      }
    }
  }
}

// ---- tokenizing -------------------------------------------------------------

struct Token {
  std::string_view text;
  int column = 1;  // 1-based
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    out.push_back({line.substr(start, i - start), static_cast<int>(start) + 1});
  }
  return out;
}

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<bool> parse_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  return std::nullopt;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

bool is_comment(std::string_view trimmed) {
  return !trimmed.empty() && trimmed[0] == '#' && (trimmed.size() == 1 || trimmed[1] != '#');
}

enum class Section { none, meta, grid, overlays, texts };

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  LevelSpec run() {
    std::size_t start = 0;
    int line_no = 0;
    while (start <= text_.size()) {
      auto end = text_.find('\n', start);
      if (end == std::string_view::npos) end = text_.size();
      std::string_view line = text_.substr(start, end - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      ++line_no;
      handle_line(line, line_no);
      if (end == text_.size()) break;
      start = end + 1;
    }
    if (!seen_.contains(Section::grid)) {
      fail(LevelErrorCode::bad_section, "missing [GRID] section", {1, 1});
    }
    if (spec_.cells.empty()) fail(LevelErrorCode::ragged_grid, "[GRID] section is empty", {grid_header_line_, 1});

    spec_.height = static_cast<int>(src_.grid_lines.size());
    std::optional<Position> agent;
    for (int r = 0; r < spec_.height; ++r) {
      for (int c = 0; c < spec_.width; ++c) {
        if (spec_.code_at({c, r}) == "@." && !agent) agent = Position{c, r};
      }
    }
    if (agent_start_) {
      spec_.meta.agent_start = *agent_start_;
    } else if (agent) {
      spec_.meta.agent_start = *agent;
    }
    validate_impl(spec_, src_);
    canonicalize(spec_);
    return std::move(spec_);
  }

 private:
  void handle_line(std::string_view line, int n) {
    std::string_view t = trim(line);
    if (t.empty() || is_comment(t)) return;
    if (t.front() == '[') {
      open_section(t, n, static_cast<int>(line.find('[')) + 1);
      return;
    }
    switch (section_) {
      case Section::none:
        fail(LevelErrorCode::syntax, "content before the first section header",
             {n, static_cast<int>(line.find_first_not_of(" \t")) + 1});
      case Section::meta: meta_line(line, n); break;
      case Section::grid: grid_line(line, n); break;
      case Section::overlays: overlay_line(line, n); break;
      case Section::texts: text_line(line, n); break;
    }
  }

  void open_section(std::string_view t, int n, int col) {
    Section s;
    if (t == "[META]") s = Section::meta;
    else if (t == "[GRID]") s = Section::grid;
    else if (t == "[OVERLAYS]") s = Section::overlays;
    else if (t == "[TEXTS]") s = Section::texts;
    else fail(LevelErrorCode::bad_section, fmt::format("unknown section '{}'", t), {n, col});
    if (!seen_.insert(s).second) {
      fail(LevelErrorCode::bad_section, fmt::format("section {} repeated", t), {n, col});
    }
    if (s == Section::grid) grid_header_line_ = n;
    section_ = s;
  }

  void meta_line(std::string_view line, int n) {
    int col = static_cast<int>(line.find_first_not_of(" \t")) + 1;
    std::string_view t = trim(line);
    auto eq = t.find('=');
    if (eq == std::string_view::npos) fail(LevelErrorCode::bad_meta, "expected key=value", {n, col});
    std::string key(trim(t.substr(0, eq)));
    std::string_view value = trim(t.substr(eq + 1));
    TextPos vpos{n, col + static_cast<int>(eq) + 1};
    if (src_.meta.contains(key)) fail(LevelErrorCode::bad_meta, fmt::format("duplicate key '{}'", key), {n, col});
    src_.meta[key] = vpos;
    auto& m = spec_.meta;
    auto need_int = [&](int min) {
      auto v = parse_int(value);
      if (!v || *v < min) fail(LevelErrorCode::bad_meta, fmt::format("{} must be an integer >= {}", key, min), vpos);
      return *v;
    };
    if (key == "id") {
      if (value.empty()) fail(LevelErrorCode::bad_meta, "id must not be empty", vpos);
      m.id = std::string(value);
    } else if (key == "agent_dir") {
      if (value == "random") {
        m.agent_dir.reset();
      } else {
        try {
          m.agent_dir = parse_direction(value);
        } catch (const UnknownName& e) {
          fail(LevelErrorCode::bad_meta, e.what(), vpos);
        }
      }
    } else if (key == "agent_start") {
      auto comma = value.find(',');
      std::optional<int> c, r;
      if (comma != std::string_view::npos) {
        c = parse_int(trim(value.substr(0, comma)));
        r = parse_int(trim(value.substr(comma + 1)));
      }
      if (!c || !r) fail(LevelErrorCode::bad_meta, "agent_start must be 'col,row'", vpos);
      agent_start_ = Position{*c, *r};
    } else if (key == "view_size") {
      auto x = value.find('x');
      std::optional<int> d, w;
      if (x == std::string_view::npos) {
        d = w = parse_int(value);
      } else {
        d = parse_int(value.substr(0, x));
        w = parse_int(value.substr(x + 1));
      }
      if (!d || !w || *w < 1 || *w % 2 == 0 || *d < 1) {
        fail(LevelErrorCode::bad_meta, "view_size must be an odd integer or DEPTHxWIDTH with odd width", vpos);
      }
      m.view_size = {*d, *w};
    } else if (key == "see_through_walls") {
      auto b = parse_bool(value);
      if (!b) fail(LevelErrorCode::bad_meta, "see_through_walls must be true or false", vpos);
      m.see_through_walls = *b;
    } else if (key == "max_steps") {
      m.max_steps = need_int(1);
    } else if (key == "soak_duration") {
      m.soak_duration = need_int(1);
    } else {
      fail(LevelErrorCode::bad_meta, fmt::format("unknown key '{}'", key), {n, col});
    }
  }

  void grid_line(std::string_view line, int n) {
    auto tokens = tokenize(line);
    std::vector<int> cols;
    const int row = static_cast<int>(src_.grid_lines.size());
    for (const auto& tok : tokens) {
      Position cell{static_cast<int>(cols.size()), row};
      if (tok.text.size() != 2) {
        fail(LevelErrorCode::bad_cell,
             fmt::format("cell code '{}' must be exactly 2 characters", tok.text), {n, tok.column}, cell);
      }
      if (!is_known_cell_code(tok.text)) {
        fail(LevelErrorCode::unknown_code, fmt::format("unknown cell code '{}'", tok.text), {n, tok.column}, cell);
      }
      cols.push_back(tok.column);
    }
    int row_width = static_cast<int>(tokens.size());
    if (src_.grid_lines.empty()) {
      spec_.width = row_width;
    } else if (row_width != spec_.width) {
      int col = row_width > spec_.width
                    ? tokens[static_cast<std::size_t>(spec_.width)].column
                    : static_cast<int>(line.find_last_not_of(" \t")) + 2;
      fail(LevelErrorCode::ragged_grid,
           fmt::format("row has {} cells, expected {}", row_width, spec_.width), {n, col});
    }
    for (const auto& tok : tokens) spec_.cells.emplace_back(tok.text);
    src_.grid_lines.push_back(n);
    src_.grid_columns.push_back(std::move(cols));
  }

  void overlay_line(std::string_view line, int n) {
    auto tokens = tokenize(line);
    const Token& kind = tokens[0];
    if (tokens.size() < 3) {
      fail(LevelErrorCode::bad_overlay, "expected 'kind col row key=value...'", {n, kind.column});
    }
    auto c = parse_int(tokens[1].text);
    if (!c) fail(LevelErrorCode::bad_overlay, "column must be an integer", {n, tokens[1].column});
    auto r = parse_int(tokens[2].text);
    if (!r) fail(LevelErrorCode::bad_overlay, "row must be an integer", {n, tokens[2].column});
    Position pos{*c, *r};

    std::map<std::string, Token> kv;
    for (std::size_t i = 3; i < tokens.size(); ++i) {
      auto eq = tokens[i].text.find('=');
      if (eq == std::string_view::npos || eq == 0) {
        fail(LevelErrorCode::bad_overlay, "expected key=value", {n, tokens[i].column});
      }
      std::string key(tokens[i].text.substr(0, eq));
      Token value{tokens[i].text.substr(eq + 1), tokens[i].column + static_cast<int>(eq) + 1};
      if (!kv.emplace(key, value).second) {
        fail(LevelErrorCode::bad_overlay, fmt::format("duplicate key '{}'", key), {n, tokens[i].column});
      }
    }
    auto allow = [&](std::initializer_list<std::string_view> keys) {
      for (const auto& [k, v] : kv) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
          fail(LevelErrorCode::bad_overlay, fmt::format("unknown key '{}' for {}", k, kind.text),
               {n, v.column - static_cast<int>(k.size()) - 1});
        }
      }
    };
    auto required = [&](const std::string& k) -> const Token& {
      auto it = kv.find(k);
      if (it == kv.end()) fail(LevelErrorCode::bad_overlay, fmt::format("{} requires '{}'", kind.text, k), {n, kind.column});
      return it->second;
    };
    auto int_value = [&](const Token& t) {
      auto v = parse_int(t.text);
      if (!v) fail(LevelErrorCode::bad_overlay, fmt::format("'{}' is not an integer", t.text), {n, t.column});
      return *v;
    };
    TextPos at{n, kind.column};

    if (kind.text == "river") {
      allow({"dir", "speed"});
      River river;
      const Token& dir = required("dir");
      try {
        river.direction = parse_direction(dir.text);
      } catch (const UnknownName& e) {
        fail(LevelErrorCode::bad_overlay, e.what(), {n, dir.column});
      }
      if (auto it = kv.find("speed"); it != kv.end()) river.speed = int_value(it->second);
      add_overlay(pos, river, at);
    } else if (kind.text == "fire") {
      allow({"active"});
      Fire fire;
      if (auto it = kv.find("active"); it != kv.end()) {
        auto b = parse_bool(it->second.text);
        if (!b) fail(LevelErrorCode::bad_overlay, "active must be true or false", {n, it->second.column});
        fire.active = *b;
      }
      add_overlay(pos, fire, at);
    } else if (kind.text == "flood") {
      allow({"rise_step"});
      add_overlay(pos, Flood{int_value(required("rise_step")), false}, at);
    } else if (kind.text == "plate") {
      allow({"effect", "link"});
      PressurePlate plate;
      const Token& effect = required("effect");
      try {
        plate.effect = parse_plate_effect(effect.text);
      } catch (const UnknownName& e) {
        fail(LevelErrorCode::bad_overlay, e.what(), {n, effect.column});
      }
      plate.link = std::string(required("link").text);
      add_overlay(pos, plate, at);
    } else if (kind.text == "dark") {
      allow({});
      add_overlay(pos, DarkZone{}, at);
    } else if (kind.text == "door") {
      allow({"id", "state"});
      DoorSetting door{pos, {}, DoorState::closed};
      if (auto it = kv.find("id"); it != kv.end()) door.id = std::string(it->second.text);
      if (auto it = kv.find("state"); it != kv.end()) {
        try {
          door.state = parse_door_state(it->second.text);
        } catch (const UnknownName& e) {
          fail(LevelErrorCode::bad_overlay, e.what(), {n, it->second.column});
        }
      }
      spec_.doors.push_back(std::move(door));
      src_.doors.push_back(at);
    } else if (kind.text == "random") {
      allow({"w", "h", "code", "count"});
      RandomSet rs;
      rs.origin = pos;
      rs.width = int_value(required("w"));
      rs.height = int_value(required("h"));
      rs.count = int_value(required("count"));
      rs.code = std::string(required("code").text);
      spec_.randomized_sets.push_back(std::move(rs));
      src_.randoms.push_back(at);
    } else {
      fail(LevelErrorCode::bad_overlay, fmt::format("unknown overlay kind '{}'", kind.text), at);
    }
  }

  void add_overlay(Position pos, TileOverlay overlay, TextPos at) {
    spec_.overlays.push_back({pos, std::move(overlay)});
    src_.overlays.push_back(at);
  }

  void text_line(std::string_view line, int n) {
    auto tokens = tokenize(line);
    if (tokens.size() < 3) fail(LevelErrorCode::bad_text, "expected 'col row [accuracy=x] \"text\"'", {n, tokens[0].column});
    auto c = parse_int(tokens[0].text);
    if (!c) fail(LevelErrorCode::bad_text, "column must be an integer", {n, tokens[0].column});
    auto r = parse_int(tokens[1].text);
    if (!r) fail(LevelErrorCode::bad_text, "row must be an integer", {n, tokens[1].column});
    TextEntry entry;
    std::size_t next = 2;
    if (tokens[2].text.starts_with("accuracy=")) {
      auto a = parse_double(tokens[2].text.substr(9));
      if (!a) fail(LevelErrorCode::bad_text, "accuracy must be a number", {n, tokens[2].column + 9});
      entry.accuracy = *a;
      next = 3;
    }
    if (next >= tokens.size() || tokens[next].text.front() != '"') {
      int col = next < tokens.size() ? tokens[next].column : static_cast<int>(line.size()) + 1;
      fail(LevelErrorCode::bad_text, "expected a double-quoted string", {n, col});
    }
    std::string_view rest = trim(line.substr(static_cast<std::size_t>(tokens[next].column - 1)));
    try {
      auto j = nlohmann::json::parse(rest);
      if (!j.is_string()) throw std::runtime_error("not a string");
      entry.text = j.get<std::string>();
    } catch (const std::exception&) {
      fail(LevelErrorCode::bad_text, "malformed quoted string", {n, tokens[next].column});
    }
    Position pos{*c, *r};
    if (spec_.texts.contains(pos)) fail(LevelErrorCode::bad_text, "text placed twice on one cell", {n, tokens[0].column});
    spec_.texts.emplace(pos, std::move(entry));
    src_.texts[pos] = {n, tokens[0].column};
  }

  std::string_view text_;
  LevelSpec spec_;
  SourceMap src_;
  Section section_ = Section::none;
  std::set<Section> seen_;
  std::optional<Position> agent_start_;
  int grid_header_line_ = 1;
};

std::string overlay_line(const OverlayPlacement& o) {
  struct Visitor {
    Position p;
    std::string operator()(const River& r) const {
      return fmt::format("river {} {} dir={} speed={}", p.col, p.row, to_string(r.direction), r.speed);
    }
    std::string operator()(const Fire& f) const {
      return fmt::format("fire {} {} active={}", p.col, p.row, f.active ? "true" : "false");
    }
    std::string operator()(const Flood& f) const {
      return fmt::format("flood {} {} rise_step={}", p.col, p.row, f.rise_step);
    }
    std::string operator()(const PressurePlate& pl) const {
      return fmt::format("plate {} {} effect={} link={}", p.col, p.row, to_string(pl.effect), pl.link);
    }
    std::string operator()(const DarkZone&) const { return fmt::format("dark {} {}", p.col, p.row); }
  };
  return std::visit(Visitor{o.pos}, o.overlay);
}

}  // namespace

void canonicalize(LevelSpec& spec) {
  std::stable_sort(spec.overlays.begin(), spec.overlays.end(),
                   [](const OverlayPlacement& a, const OverlayPlacement& b) {
                     if (a.pos.row != b.pos.row) return a.pos.row < b.pos.row;
                     if (a.pos.col != b.pos.col) return a.pos.col < b.pos.col;
                     return a.overlay.index() < b.overlay.index();
                   });
  std::stable_sort(spec.doors.begin(), spec.doors.end(), [](const DoorSetting& a, const DoorSetting& b) {
    return std::pair(a.pos.row, a.pos.col) < std::pair(b.pos.row, b.pos.col);
  });
}

LevelSpec parse_level(std::string_view text) { return Parser(text).run(); }

void validate_level(const LevelSpec& spec) { validate_impl(spec, SourceMap{}); }

std::string emit_level(const LevelSpec& input) {
  validate_level(input);
  LevelSpec spec = input;
  canonicalize(spec);
  const auto& m = spec.meta;
  std::ostringstream out;
  out << "[META]\n";
  out << "agent_dir=" << (m.agent_dir ? to_string(*m.agent_dir) : "random") << "\n";
  out << "agent_start=" << m.agent_start.col << "," << m.agent_start.row << "\n";
  out << "id=" << m.id << "\n";
  out << "max_steps=" << m.max_steps << "\n";
  out << "see_through_walls=" << (m.see_through_walls ? "true" : "false") << "\n";
  out << "soak_duration=" << m.soak_duration << "\n";
  out << "view_size=" << format_view_size(m.view_size) << "\n";

  out << "\n[GRID]\n";
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      if (c > 0) out << ' ';
      out << spec.code_at({c, r});
    }
    out << "\n";
  }

  out << "\n[OVERLAYS]\n";
  for (const auto& o : spec.overlays) out << overlay_line(o) << "\n";
  for (const auto& d : spec.doors) {
    out << "door " << d.pos.col << " " << d.pos.row;
    if (!d.id.empty()) out << " id=" << d.id;
    out << " state=" << to_string(d.state) << "\n";
  }
  for (const auto& rs : spec.randomized_sets) {
    out << fmt::format("random {} {} code={} count={} h={} w={}\n", rs.origin.col, rs.origin.row, rs.code,
                       rs.count, rs.height, rs.width);
  }

  out << "\n[TEXTS]\n";
  for (const auto& [pos, entry] : spec.texts) {
    out << pos.col << " " << pos.row << " ";
    if (entry.accuracy) out << "accuracy=" << format_double(*entry.accuracy) << " ";
    out << nlohmann::json(entry.text).dump() << "\n";
  }
  return out.str();
}

LevelSpec load_level_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open level file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_level(buf.str());
}

}  // namespace refgrid
