#include "refgrid/serializers.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include <fmt/format.h>

namespace refgrid {

std::string_view to_string(SerializerKind k) {
  switch (k) {
    case SerializerKind::grid: return "grid";
    case SerializerKind::memory: return "memory";
    case SerializerKind::symbolic: return "symbolic";
  }
  return "?";
}

SerializerKind parse_serializer(std::string_view s) {
  if (s == "grid") return SerializerKind::grid;
  if (s == "memory") return SerializerKind::memory;
  if (s == "symbolic") return SerializerKind::symbolic;
  throw UnknownName("unknown serializer '" + std::string(s) + "'");
}

std::string display_code(const WorldObject& o) {
  if (o.kind == ObjectKind::door) {
    char state = o.door_state == DoorState::open ? 'd' : o.door_state == DoorState::locked ? 'L' : 'D';
    return {color_char(o.color), state};
  }
  return object_code(o);
}

std::string status_line(const Observation& obs) {
  return fmt::format("Step {} | facing {} | carrying: {}", obs.step_index, to_string(obs.pose.facing),
                     obs.carrying ? describe(*obs.carrying) : "nothing");
}

namespace {

std::string state_token(const WorldObject& o) {
  if (o.kind == ObjectKind::door) return std::string(to_string(o.door_state));
  return std::string(to_string(o.condition));
}

std::string quote(const std::string& text) { return nlohmann::json(text).dump(); }

std::string accuracy_label(double a) { return fmt::format("{}%", static_cast<int>(std::lround(a * 100.0))); }

const char* relative_flow(Direction river, Direction facing) {
  static constexpr const char* names[] = {"ahead", "right", "back", "left"};
  return names[(static_cast<int>(river) - static_cast<int>(facing) + 4) % 4];
}

template <typename Fn>
void for_each_visible(const Observation& obs, Fn&& fn) {
  const int half = obs.half_width();
  for (int d = 0; d < obs.view.depth; ++d) {
    for (int l = -half; l <= half; ++l) {
      EgoPos p{d, l};
      const FovCell& c = obs.at(p);
      if (c.visible) fn(p, c);
    }
  }
}

// The agent's own cell renders as "@." in the grid, so it is left out everywhere.
bool listed_object(const FovCell& c, EgoPos p) {
  return c.object && c.object->kind != ObjectKind::wall && !(p.ahead == 0 && p.lateral == 0);
}

std::vector<std::string> tile_descriptions(const CellTiles& t, Direction facing) {
  std::vector<std::string> out;
  if (t.fire) out.push_back(t.fire->active ? "fire (burning)" : "fire (out)");
  if (t.flood) out.push_back(t.flood->active ? "flood (risen)" : "flood (not yet risen)");
  if (t.river) {
    out.push_back(fmt::format("river flowing {} (speed {})", relative_flow(t.river->direction, facing),
                              t.river->speed));
  }
  if (t.plate) {
    if (t.plate->effect == PlateEffect::continuous) {
      out.push_back("continuous pressure plate");
    } else {
      out.push_back(t.plate->fired ? "trigger pressure plate (fired)" : "trigger pressure plate (armed)");
    }
  }
  return out;
}

std::string testimony_line(const Testimony& t) {
  std::string where;
  if (t.ahead) where = " at " + ego_label({*t.ahead, *t.lateral});
  std::string acc;
  if (t.accuracy) acc = fmt::format(" (stated accuracy {})", accuracy_label(*t.accuracy));
  return fmt::format("{}{}{}: {}", to_string(t.kind), where, acc, quote(t.text));
}

std::string join_phrases(const std::vector<std::string>& items) {
  if (items.empty()) return {};
  if (items.size() == 1) return items[0];
  std::string out;
  for (std::size_t i = 0; i + 1 < items.size(); ++i) {
    if (i > 0) out += ", ";
    out += items[i];
  }
  return out + " and " + items.back();
}

std::string article(const std::string& noun) {
  return (std::string("aeiou").find(noun.front()) != std::string::npos ? "an " : "a ") + noun;
}

std::string where_in(const Observation& obs, Position p) {
  auto e = obs.ego_of(p);
  return e ? ego_label(*e) : fmt::format("({},{})", p.col, p.row);
}

std::string direction_between(Position from, Position to) {
  if (to.row < from.row) return "north";
  if (to.row > from.row) return "south";
  if (to.col > from.col) return "east";
  return "west";
}

std::vector<std::string> new_sightings(const Observation* prev, const Observation& cur) {
  std::vector<std::string> seen;
  for_each_visible(cur, [&](EgoPos p, const FovCell& c) {
    if (!listed_object(c, p)) return;
    if (prev) {
      auto before = prev->ego_of(c.world);
      if (before && prev->at(*before).visible && prev->at(*before).object &&
          object_code(*prev->at(*before).object) == object_code(*c.object)) {
        return;
      }
    }
    seen.push_back(fmt::format("{} at {}", article(describe(*c.object)), ego_label(p)));
  });
  return seen;
}

}  // namespace

std::string serialize_symbolic(const Observation& obs) {
  std::string out = status_line(obs) + "\n";
  out += "Objects in view:\n";
  int listed = 0;
  for_each_visible(obs, [&](EgoPos p, const FovCell& c) {
    if (!listed_object(c, p)) return;
    out += fmt::format("- {} at {} ({})\n", describe(*c.object), ego_label(p), state_token(*c.object));
    ++listed;
  });
  if (listed == 0) out += "(no objects visible)\n";

  std::string tiles;
  for_each_visible(obs, [&](EgoPos p, const FovCell& c) {
    for (const auto& d : tile_descriptions(c.tiles, obs.pose.facing)) {
      tiles += fmt::format("- {} at {}\n", d, ego_label(p));
    }
  });
  if (!tiles.empty()) out += "Tiles in view:\n" + tiles;

  if (!obs.testimony.empty()) {
    out += "Testimony:\n";
    for (const auto& t : obs.testimony) out += "- " + testimony_line(t) + "\n";
  }
  return out;
}

std::string serialize_grid(const Observation& obs) {
  const int half = obs.half_width();
  std::vector<std::string> labels;
  std::size_t cw = 2;
  for (int l = -half; l <= half; ++l) {
    labels.push_back(lateral_label(l));
    cw = std::max(cw, labels.back().size());
  }
  const std::size_t label_w = fmt::format("ahead {}", obs.view.depth - 1).size();

  std::string out = status_line(obs) + "\n";
  out += std::string(label_w, ' ');
  for (const auto& lab : labels) out += " " + fmt::format("{:<{}}", lab, cw);
  while (!out.empty() && out.back() == ' ') out.pop_back();
  out += "\n";
  for (int d = 0; d < obs.view.depth; ++d) {
    std::string row = fmt::format("{:<{}}", fmt::format("ahead {}", d), label_w);
    for (int l = -half; l <= half; ++l) {
      const FovCell& c = obs.at({d, l});
      std::string code;
      if (d == 0 && l == 0) {
        code = "@.";
      } else if (!c.visible) {
        code = "??";
      } else if (c.object) {
        code = display_code(*c.object);
      } else {
        code = tile_code(c.tiles, obs.pose.facing);
      }
      row += " " + fmt::format("{:<{}}", code, cw);
    }
    while (!row.empty() && row.back() == ' ') row.pop_back();
    out += row + "\n";
  }
  out += "Legend: K=key, B=ball, D=door, @=agent, #=wall, .=floor, X=box, O=boulder, G=goal, "
         "N=notice board, S=signpost, d=open door, L=locked door, \?\?=not visible\n";
  out += "Colors: r=red, b=blue, g=green, y=yellow, p=purple, e=grey\n";
  out += "Tiles: ^^=fire, ~~=flood, ,,=flood not yet risen, ~^ ~> ~v ~<=river flowing ahead/right/back/left, "
         "_c=continuous plate, _t=trigger plate, _T=fired trigger plate\n";
  for (const auto& t : obs.testimony) {
    std::string line = testimony_line(t);
    line[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(line[0])));
    out += line + "\n";
  }
  return out;
}

std::string narrate_start(const Observation& first) {
  std::string out = fmt::format("Step {}: You started facing {}.", first.step_index, to_string(first.pose.facing));
  auto seen = new_sightings(nullptr, first);
  if (!seen.empty()) out += " You see " + join_phrases(seen) + ".";
  return out;
}

std::string narrate_step(const Observation& prev, const Observation& cur) {
  std::string out = fmt::format("Step {}:", cur.step_index);
  const bool new_room = cur.segment != prev.segment;
  if (new_room) out += " You entered a new room.";
  for (const auto& e : cur.events) {
    std::string what = e.object ? describe(*e.object) : std::string();
    switch (e.kind) {
      case EventKind::turned_left: out += " You turned left."; break;
      case EventKind::turned_right: out += " You turned right."; break;
      case EventKind::moved: out += fmt::format(" You moved {}.", direction_between(e.from, e.to)); break;
      case EventKind::bumped: out += " You tried to move forward but were blocked."; break;
      case EventKind::pushed:
        out += fmt::format(" You pushed the {} {}.", what, direction_between(e.from, e.to));
        break;
      case EventKind::picked_up: out += fmt::format(" You picked up the {}.", what); break;
      case EventKind::dropped: out += fmt::format(" You dropped the {}.", what); break;
      case EventKind::door_opened: out += fmt::format(" You opened the {}.", what); break;
      case EventKind::door_closed: out += fmt::format(" You closed the {}.", what); break;
      case EventKind::door_unlocked:
        out += fmt::format(" You unlocked the {} with your {} key.", what, to_string(e.object->color));
        break;
      case EventKind::waited: out += " You waited."; break;
      default: {
        // World events are narrated only where the agent can see them.
        if (new_room || !cur.sees(e.to)) break;
        std::string at = where_in(cur, e.to);
        if (e.kind == EventKind::drifted) {
          out += fmt::format(" The {} drifted to {}.", what, at);
        } else if (e.kind == EventKind::dried) {
          out += fmt::format(" The {} at {} dried out.", what, at);
        } else if (e.kind == EventKind::fire_extinguished) {
          out += fmt::format(" The fire at {} went out.", at);
        } else if (e.kind == EventKind::flood_rose) {
          out += fmt::format(" Water rose at {}.", at);
        } else if (e.kind == EventKind::plate_opened_door) {
          out += fmt::format(" The {} at {} swung open.", what, at);
        } else if (e.kind == EventKind::plate_closed_door) {
          out += fmt::format(" The {} at {} swung shut.", what, at);
        }
        break;
      }
    }
  }
  auto seen = new_sightings(new_room ? nullptr : &prev, cur);
  if (!seen.empty()) out += " You now see " + join_phrases(seen) + ".";
  return out;
}

std::string serialize_memory(const std::vector<Observation>& history) {
  if (history.empty()) throw EmptyHistory();
  const Observation& cur = history.back();
  if (history.size() == 1) return serialize_symbolic(cur) + "\n" + serialize_grid(cur);
  std::string out = "History:\n" + narrate_start(history.front()) + "\n";
  for (std::size_t i = 1; i < history.size(); ++i) out += narrate_step(history[i - 1], history[i]) + "\n";
  out += "\nCurrent observation:\n";
  out += serialize_symbolic(cur) + "\n" + serialize_grid(cur);
  return out;
}

std::string serialize(SerializerKind kind, const std::vector<Observation>& history) {
  if (history.empty()) throw EmptyHistory();
  switch (kind) {
    case SerializerKind::grid: return serialize_grid(history.back());
    case SerializerKind::symbolic: return serialize_symbolic(history.back());
    case SerializerKind::memory: return serialize_memory(history);
  }
  return {};
}

}  // namespace refgrid
