#include "refgrid/world.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace refgrid {

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::turned_left: return "turned_left";
    case EventKind::turned_right: return "turned_right";
    case EventKind::moved: return "moved";
    case EventKind::bumped: return "bumped";
    case EventKind::pushed: return "pushed";
    case EventKind::picked_up: return "picked_up";
    case EventKind::dropped: return "dropped";
    case EventKind::door_opened: return "door_opened";
    case EventKind::door_closed: return "door_closed";
    case EventKind::door_unlocked: return "door_unlocked";
    case EventKind::waited: return "waited";
    case EventKind::drifted: return "drifted";
    case EventKind::dried: return "dried";
    case EventKind::fire_extinguished: return "fire_extinguished";
    case EventKind::flood_rose: return "flood_rose";
    case EventKind::plate_opened_door: return "plate_opened_door";
    case EventKind::plate_closed_door: return "plate_closed_door";
  }
  return "unknown";
}

std::uint64_t SeededRng::uniform_below(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::string tile_code(const CellTiles& tiles, std::optional<Direction> facing) {
  if (tiles.burning()) return "^^";
  if (tiles.flood) return tiles.flood->active ? "~~" : ",,";
  if (tiles.river) {
    int rel = static_cast<int>(tiles.river->direction);
    if (facing) rel = (rel - static_cast<int>(*facing) + 4) % 4;
    static constexpr const char* arrows[] = {"~^", "~>", "~v", "~<"};
    return arrows[rel];
  }
  if (tiles.plate) {
    if (tiles.plate->effect == PlateEffect::continuous) return "_c";
    return tiles.plate->fired ? "_T" : "_t";
  }
  if (tiles.dark) return "::";
  return "..";
}

namespace {

Event make_event(EventKind kind, std::optional<WorldObject> obj = std::nullopt, Position from = {},
                 Position to = {}) {
  return Event{kind, std::move(obj), from, to};
}

}  // namespace

World World::create(const LevelSpec& level, std::uint64_t seed) {
  validate_level(level);
  World w;
  w.width_ = level.width;
  w.height_ = level.height;
  w.seed_ = seed;
  w.meta_ = level.meta;
  w.cells_.resize(level.cells.size());

  std::map<Position, DoorSetting> door_settings;
  for (const auto& d : level.doors) door_settings[d.pos] = d;

  for (int r = 0; r < level.height; ++r) {
    for (int c = 0; c < level.width; ++c) {
      Position p{c, r};
      const auto& code = level.code_at(p);
      Cell& cell = w.mut(p);
      if (code == "##") {
        cell.object = make_wall();
      } else if (code != ".." && code != "@.") {
        WorldObject obj = *object_from_code(code);
        if (obj.kind == ObjectKind::door) {
          DoorState state = DoorState::closed;
          if (auto it = door_settings.find(p); it != door_settings.end()) {
            state = it->second.state;
            if (!it->second.id.empty()) w.door_ids_[it->second.id] = p;
          }
          obj.door_state = state;
          w.door_rest_[p] = state;
        }
        if (is_testimony(obj.kind)) {
          const auto& entry = level.texts.at(p);
          obj.text = entry.text;
          obj.stated_accuracy = entry.accuracy;
        }
        cell.object = std::move(obj);
      }
    }
  }
  for (const auto& o : level.overlays) w.mut(o.pos).tiles.add(o.overlay);

  SeededRng rng(seed);
  w.agent_.pos = level.meta.agent_start;
  w.agent_.facing = level.meta.agent_dir ? *level.meta.agent_dir
                                         : static_cast<Direction>(rng.uniform_below(4));

  for (const auto& rs : level.randomized_sets) {
    std::vector<Position> free;
    for (int r = rs.origin.row; r < rs.origin.row + rs.height; ++r) {
      for (int c = rs.origin.col; c < rs.origin.col + rs.width; ++c) {
        Position p{c, r};
        if (level.code_at(p) == ".." && !w.cell(p).object && p != w.agent_.pos) free.push_back(p);
      }
    }
    if (static_cast<int>(free.size()) < rs.count) {
      throw LevelError(LevelErrorCode::insufficient_cells,
                       fmt::format("random set '{}' needs {} free cells, rectangle has {}", rs.code,
                                   rs.count, free.size()),
                       0, 0, rs.origin);
    }
    WorldObject obj = *object_from_code(rs.code);
    for (std::size_t i = 0; i < static_cast<std::size_t>(rs.count); ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(free.size() - i));
      std::swap(free[i], free[j]);
      w.mut(free[i]).object = obj;
    }
  }

  w.activate_floods(0);
  w.check_fires();
  w.resolve_plates();
  w.last_events_.clear();
  return w;
}

void World::step(Action action) {
  last_events_.clear();
  apply_action(action);
  std::vector<Position> displaced;
  drift_rivers(displaced);
  update_wetness(displaced);
  activate_floods(step_count_ + 1);
  check_fires();
  resolve_plates();
  ++step_count_;
  history_.push_back(action);
}

World World::simulate(const std::vector<Action>& script) const {
  World copy = *this;
  for (Action a : script) copy.step(a);
  return copy;
}

bool World::passable(Position p) const {
  if (!in_bounds(p)) return false;
  const Cell& c = cell(p);
  if (c.object && !is_walkable(*c.object)) return false;
  return !c.tiles.burning() && !c.tiles.flooded();
}

void World::apply_action(Action a) {
  const Position ahead = agent_.pos + forward_offset(agent_.facing);
  switch (a) {
    case Action::turn_left:
      agent_.facing = turn_left(agent_.facing);
      last_events_.push_back(make_event(EventKind::turned_left));
      return;
    case Action::turn_right:
      agent_.facing = turn_right(agent_.facing);
      last_events_.push_back(make_event(EventKind::turned_right));
      return;
    case Action::wait:
      last_events_.push_back(make_event(EventKind::waited));
      return;
    case Action::forward: {
      if (!in_bounds(ahead)) break;
      Cell& target = mut(ahead);
      if (target.object && is_pushable(target.object->kind)) {
        Position beyond = ahead + forward_offset(agent_.facing);
        if (target.tiles.burning() || target.tiles.flooded() || !in_bounds(beyond)) break;
        Cell& dest = mut(beyond);
        if (dest.object || dest.tiles.flooded()) break;
        dest.object = std::move(target.object);
        target.object.reset();
        last_events_.push_back(make_event(EventKind::pushed, dest.object, ahead, beyond));
        last_events_.push_back(make_event(EventKind::moved, std::nullopt, agent_.pos, ahead));
        agent_.pos = ahead;
        return;
      }
      if (!passable(ahead)) break;
      last_events_.push_back(make_event(EventKind::moved, std::nullopt, agent_.pos, ahead));
      agent_.pos = ahead;
      return;
    }
    case Action::pickup: {
      if (inventory_ || !in_bounds(ahead)) break;
      Cell& target = mut(ahead);
      if (!target.object || !is_portable(target.object->kind)) break;
      inventory_ = std::move(target.object);
      target.object.reset();
      last_events_.push_back(make_event(EventKind::picked_up, inventory_, ahead, agent_.pos));
      return;
    }
    case Action::drop: {
      if (!inventory_ || !in_bounds(ahead)) break;
      Cell& target = mut(ahead);
      if (target.object || target.tiles.flooded()) break;
      target.object = std::move(inventory_);
      inventory_.reset();
      last_events_.push_back(make_event(EventKind::dropped, target.object, agent_.pos, ahead));
      return;
    }
    case Action::toggle: {
      if (!in_bounds(ahead)) break;
      Cell& target = mut(ahead);
      if (!target.object || target.object->kind != ObjectKind::door) break;
      WorldObject& door = *target.object;
      switch (door.door_state) {
        case DoorState::locked:
          if (!inventory_ || inventory_->kind != ObjectKind::key || inventory_->color != door.color) break;
          door.door_state = DoorState::open;
          last_events_.push_back(make_event(EventKind::door_unlocked, door, ahead, ahead));
          return;
        case DoorState::closed:
          door.door_state = DoorState::open;
          last_events_.push_back(make_event(EventKind::door_opened, door, ahead, ahead));
          return;
        case DoorState::open:
          door.door_state = DoorState::closed;
          last_events_.push_back(make_event(EventKind::door_closed, door, ahead, ahead));
          return;
      }
      break;
    }
  }
  if (a == Action::forward) last_events_.push_back(make_event(EventKind::bumped, std::nullopt, agent_.pos, ahead));
}

void World::drift_rivers(std::vector<Position>& displaced) {
  struct Item {
    Position pos;
    Direction dir;
    int speed;
    int rank;
  };
  std::vector<Item> items;
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      const Cell& cl = cell({c, r});
      if (!cl.tiles.river || !cl.object || !is_portable(cl.object->kind)) continue;
      Offset f = forward_offset(cl.tiles.river->direction);
      items.push_back({{c, r}, cl.tiles.river->direction, cl.tiles.river->speed, c * f.dcol + r * f.drow});
    }
  }
  // Downstream objects move first so a column of objects advances together.
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.rank > b.rank; });

  for (const Item& it : items) {
    Position cur = it.pos;
    Offset f = forward_offset(it.dir);
    for (int s = 0; s < it.speed; ++s) {
      Position next = cur + f;
      if (!in_bounds(next) || next == agent_.pos) break;
      const Cell& nc = cell(next);
      if (nc.object || nc.tiles.flooded()) break;
      mut(next).object = std::move(mut(cur).object);
      mut(cur).object.reset();
      cur = next;
      if (!nc.tiles.river) break;
    }
    if (cur != it.pos) {
      displaced.push_back(cur);
      last_events_.push_back(make_event(EventKind::drifted, cell(cur).object, it.pos, cur));
    }
  }
}

void World::update_wetness(const std::vector<Position>& displaced) {
  const int soak = meta_.soak_duration;
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      Position p{c, r};
      Cell& cl = mut(p);
      if (!cl.object || cl.object->kind == ObjectKind::wall) continue;
      WorldObject& obj = *cl.object;
      if (cl.tiles.river || cl.tiles.flooded()) {
        obj.condition = Condition::soaked;
        obj.wet_turns_remaining = soak;
      } else if (std::find(displaced.begin(), displaced.end(), p) != displaced.end()) {
        obj.condition = Condition::wet;
        obj.wet_turns_remaining = soak;
      } else if (obj.wet_turns_remaining > 0) {
        if (--obj.wet_turns_remaining == 0) {
          obj.condition = Condition::dry;
          last_events_.push_back(make_event(EventKind::dried, obj, p, p));
        } else {
          obj.condition = Condition::wet;
        }
      }
    }
  }
  if (inventory_ && inventory_->wet_turns_remaining > 0) {
    if (--inventory_->wet_turns_remaining == 0) {
      inventory_->condition = Condition::dry;
      last_events_.push_back(make_event(EventKind::dried, inventory_, agent_.pos, agent_.pos));
    } else {
      inventory_->condition = Condition::wet;
    }
  }
}

void World::activate_floods(int step) {
  auto douse = [&](Position p) {
    if (!in_bounds(p)) return;
    Cell& cl = mut(p);
    if (cl.tiles.burning()) {
      cl.tiles.fire->active = false;
      last_events_.push_back(make_event(EventKind::fire_extinguished, std::nullopt, p, p));
    }
  };
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      Position p{c, r};
      Cell& cl = mut(p);
      if (!cl.tiles.flood || cl.tiles.flood->active || step < cl.tiles.flood->rise_step) continue;
      cl.tiles.flood->active = true;
      last_events_.push_back(make_event(EventKind::flood_rose, std::nullopt, p, p));
      // Rising water reaches fire on its own cell and on the four neighbours.
      douse(p);
      for (Direction d : kAllDirections) douse(p + forward_offset(d));
    }
  }
}

void World::check_fires() {
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      Position p{c, r};
      Cell& cl = mut(p);
      if (cl.tiles.burning() && cl.object && is_wet(*cl.object)) {
        cl.tiles.fire->active = false;
        last_events_.push_back(make_event(EventKind::fire_extinguished, cl.object, p, p));
      }
    }
  }
}

bool World::weighted(Position p) const {
  if (agent_.pos == p) return true;
  const Cell& cl = cell(p);
  return cl.object && cl.object->kind != ObjectKind::wall;
}

bool World::plate_linked(Position door) const {
  std::string id = door_id_at(door);
  if (id.empty()) return false;
  for (const auto& cl : cells_) {
    if (cl.tiles.plate && cl.tiles.plate->link == id) return true;
  }
  return false;
}

void World::resolve_plates() {
  struct Link {
    bool any_continuous = false;
    bool held_open = false;
  };
  std::map<std::string, Link> links;
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      Position p{c, r};
      Cell& cl = mut(p);
      if (!cl.tiles.plate) continue;
      PressurePlate& plate = *cl.tiles.plate;
      Link& link = links[plate.link];
      bool w = weighted(p);
      if (plate.effect == PlateEffect::trigger) {
        if (w) plate.fired = true;
        if (plate.fired) link.held_open = true;
      } else {
        link.any_continuous = true;
        if (w) link.held_open = true;
      }
    }
  }
  for (const auto& [id, link] : links) {
    auto pos = door_position(id);
    if (!pos) continue;
    WorldObject& door = *mut(*pos).object;
    if (link.held_open) {
      if (door.door_state != DoorState::open) {
        door.door_state = DoorState::open;
        last_events_.push_back(make_event(EventKind::plate_opened_door, door, *pos, *pos));
      }
    } else if (link.any_continuous) {
      DoorState rest = door_rest_.at(*pos);
      if (door.door_state != rest && agent_.pos != *pos) {
        door.door_state = rest;
        last_events_.push_back(make_event(EventKind::plate_closed_door, door, *pos, *pos));
      }
    }
  }
}

std::optional<Position> World::door_position(const std::string& id) const {
  auto it = door_ids_.find(id);
  if (it == door_ids_.end()) return std::nullopt;
  return it->second;
}

std::string World::door_id_at(Position p) const {
  for (const auto& [id, pos] : door_ids_) {
    if (pos == p) return id;
  }
  return {};
}

std::size_t World::object_count() const {
  std::size_t n = inventory_ ? 1 : 0;
  for (const auto& cl : cells_) {
    if (cl.object && cl.object->kind != ObjectKind::wall) ++n;
  }
  return n;
}

namespace {

nlohmann::json object_json(const WorldObject& o) {
  nlohmann::json j{{"kind", to_string(o.kind)}, {"color", to_string(o.color)}, {"code", object_code(o)}};
  if (o.kind == ObjectKind::door) j["door_state"] = to_string(o.door_state);
  j["condition"] = to_string(o.condition);
  j["wet_turns_remaining"] = o.wet_turns_remaining;
  if (!o.text.empty()) j["text"] = o.text;
  if (o.stated_accuracy) j["stated_accuracy"] = *o.stated_accuracy;
  return j;
}

nlohmann::json tiles_json(const CellTiles& t) {
  nlohmann::json j = nlohmann::json::object();
  if (t.river) j["river"] = {{"direction", to_string(t.river->direction)}, {"speed", t.river->speed}};
  if (t.fire) j["fire"] = {{"active", t.fire->active}};
  if (t.flood) j["flood"] = {{"rise_step", t.flood->rise_step}, {"active", t.flood->active}};
  if (t.plate) {
    j["plate"] = {{"effect", to_string(t.plate->effect)}, {"link", t.plate->link}, {"fired", t.plate->fired}};
  }
  if (t.dark) j["dark"] = true;
  return j;
}

}  // namespace

nlohmann::json World::to_json() const {
  nlohmann::json cells = nlohmann::json::array();
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      const Cell& cl = cell({c, r});
      if (cl.object && cl.object->kind == ObjectKind::wall && cl.tiles.empty()) continue;
      if (!cl.object && cl.tiles.empty()) continue;
      nlohmann::json j{{"col", c}, {"row", r}};
      if (cl.object) j["object"] = object_json(*cl.object);
      if (!cl.tiles.empty()) j["tiles"] = tiles_json(cl.tiles);
      if (cl.object && cl.object->kind == ObjectKind::door) {
        if (auto id = door_id_at({c, r}); !id.empty()) j["door_id"] = id;
      }
      cells.push_back(std::move(j));
    }
  }
  nlohmann::json walls = nlohmann::json::array();
  for (int r = 0; r < height_; ++r) {
    std::string row;
    for (int c = 0; c < width_; ++c) {
      const Cell& cl = cell({c, r});
      row += (cl.object && cl.object->kind == ObjectKind::wall) ? '#' : '.';
    }
    walls.push_back(row);
  }
  std::vector<int> hist;
  hist.reserve(history_.size());
  for (Action a : history_) hist.push_back(action_code(a));
  return {
      {"level", meta_.id},
      {"width", width_},
      {"height", height_},
      {"seed", seed_},
      {"step_count", step_count_},
      {"agent", {{"col", agent_.pos.col}, {"row", agent_.pos.row}, {"facing", to_string(agent_.facing)}}},
      {"inventory", inventory_ ? object_json(*inventory_) : nlohmann::json(nullptr)},
      {"walls", walls},
      {"cells", cells},
      {"history", hist},
  };
}

std::string World::fingerprint() const {
  std::string s = to_json().dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string World::render_full() const {
  std::string out;
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      Position p{c, r};
      if (c > 0) out += ' ';
      const Cell& cl = cell(p);
      if (p == agent_.pos) {
        out += "@.";
      } else if (cl.object) {
        out += object_code(*cl.object);
      } else {
        out += tile_code(cl.tiles);
      }
    }
    out += '\n';
  }
  return out;
}

void World::check_invariants() const {
  auto bad = [](const std::string& what) { throw std::logic_error("world invariant: " + what); };
  if (!in_bounds(agent_.pos)) bad("agent out of bounds");
  const Cell& here = cell(agent_.pos);
  if (here.object && !is_walkable(*here.object)) bad("agent shares a cell with a solid object");
  if (static_cast<std::size_t>(step_count_) != history_.size()) bad("step_count differs from history length");
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      Position p{c, r};
      const Cell& cl = cell(p);
      bool border = r == 0 || c == 0 || r == height_ - 1 || c == width_ - 1;
      if (border && !(cl.object && cl.object->kind == ObjectKind::wall)) bad("perimeter cell is not a wall");
      if (cl.object) {
        const auto& o = *cl.object;
        if ((o.wet_turns_remaining > 0) != (o.condition != Condition::dry)) bad("wetness counter and condition disagree");
        if (o.text.empty() == is_testimony(o.kind)) bad("testimony text mismatch");
      }
      if (cl.tiles.flood && cl.tiles.flood->active != (step_count_ >= cl.tiles.flood->rise_step)) {
        bad(fmt::format("flood at ({},{}) active flag out of step", c, r));
      }
      if (cl.tiles.plate && cl.tiles.plate->fired) {
        auto door = door_position(cl.tiles.plate->link);
        if (door && cell(*door).object->door_state != DoorState::open) bad("fired trigger with a shut door");
      }
    }
  }
}

}  // namespace refgrid
