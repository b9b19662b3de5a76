#include "refgrid/probe.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

#include <fmt/format.h>

namespace refgrid {

std::string_view to_string(Category c) {
  switch (c) {
    case Category::P: return "P";
    case Category::M: return "M";
    case Category::C: return "C";
    case Category::U: return "U";
    case Category::X: return "X";
  }
  return "?";
}

Category parse_category(std::string_view s) {
  if (s.size() == 1) {
    switch (std::toupper(static_cast<unsigned char>(s[0]))) {
      case 'P': return Category::P;
      case 'M': return Category::M;
      case 'C': return Category::C;
      case 'U': return Category::U;
      case 'X': return Category::X;
      default: break;
    }
  }
  throw UnknownName("unknown probe category '" + std::string(s) + "'");
}

std::string_view to_string(AnswerType a) {
  switch (a) {
    case AnswerType::presence: return "presence";
    case AnswerType::count: return "count";
    case AnswerType::state: return "state";
    case AnswerType::location: return "location";
    case AnswerType::causal: return "causal";
    case AnswerType::uncertainty: return "uncertainty";
  }
  return "?";
}

AnswerType parse_answer_type(std::string_view s) {
  for (AnswerType a : {AnswerType::presence, AnswerType::count, AnswerType::state, AnswerType::location,
                       AnswerType::causal, AnswerType::uncertainty}) {
    if (to_string(a) == s) return a;
  }
  if (s == "attribute") return AnswerType::state;
  throw UnknownName("unknown answer type '" + std::string(s) + "'");
}

std::string_view to_string(ConflictPolicy p) {
  return p == ConflictPolicy::observation_first ? "observation_first" : "testimony_first";
}

ConflictPolicy parse_conflict_policy(std::string_view s) {
  if (s == "observation_first") return ConflictPolicy::observation_first;
  if (s == "testimony_first") return ConflictPolicy::testimony_first;
  throw UnknownName("unknown conflict policy '" + std::string(s) + "'");
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::correct: return "correct";
    case Verdict::hallucinated: return "hallucinated";
    case Verdict::unparseable: return "unparseable";
    case Verdict::transport_failure: return "transport_failure";
  }
  return "?";
}

Verdict parse_verdict(std::string_view s) {
  for (Verdict v : {Verdict::correct, Verdict::hallucinated, Verdict::unparseable, Verdict::transport_failure}) {
    if (to_string(v) == s) return v;
  }
  throw UnknownName("unknown verdict '" + std::string(s) + "'");
}

bool ObjectFilter::matches(const WorldObject& o) const {
  if (o.kind == ObjectKind::wall && kind != ObjectKind::wall) return false;
  if (kind && o.kind != *kind) return false;
  if (color && o.color != *color) return false;
  if (condition && o.condition != *condition) return false;
  if (door_state && (o.kind != ObjectKind::door || o.door_state != *door_state)) return false;
  return true;
}

std::string ObjectFilter::describe() const {
  std::vector<std::string> words;
  if (door_state) words.emplace_back(to_string(*door_state));
  if (condition) words.emplace_back(to_string(*condition));
  if (color) words.emplace_back(to_string(*color));
  words.emplace_back(kind ? std::string(to_string(*kind)) : "object");
  std::string out;
  for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
  return out;
}

AnswerType answer_type_of(const Query& q) {
  struct V {
    AnswerType operator()(const PresenceQuery&) const { return AnswerType::presence; }
    AnswerType operator()(const CountQuery&) const { return AnswerType::count; }
    AnswerType operator()(const StateQuery&) const { return AnswerType::state; }
    AnswerType operator()(const LocationQuery&) const { return AnswerType::location; }
    AnswerType operator()(const CausalQuery&) const { return AnswerType::causal; }
    AnswerType operator()(const UncertaintyQuery&) const { return AnswerType::uncertainty; }
  };
  return std::visit(V{}, q);
}

// ---- JSON -------------------------------------------------------------------

namespace {

constexpr std::array<std::pair<std::string_view, Attribute>, 5> kAttributes = {{
    {"color", Attribute::color},
    {"kind", Attribute::kind},
    {"condition", Attribute::condition},
    {"door_state", Attribute::door_state},
    {"code", Attribute::code},
}};

constexpr std::array<std::pair<std::string_view, Outcome>, 6> kOutcomes = {{
    {"passable", Outcome::passable},
    {"fire_active", Outcome::fire_active},
    {"flood_active", Outcome::flood_active},
    {"door_state", Outcome::door_state},
    {"object_code", Outcome::object_code},
    {"condition", Outcome::condition},
}};

template <typename E, std::size_t N>
std::string_view enum_name(E e, const std::array<std::pair<std::string_view, E>, N>& table) {
  for (const auto& [n, v] : table) {
    if (v == e) return n;
  }
  return "?";
}

template <typename E, std::size_t N>
E enum_value(std::string_view s, const std::array<std::pair<std::string_view, E>, N>& table, const char* what) {
  for (const auto& [n, v] : table) {
    if (n == s) return v;
  }
  throw ProbeError(fmt::format("unknown {} '{}'", what, s));
}

nlohmann::json filter_json(const ObjectFilter& f) {
  nlohmann::json j = nlohmann::json::object();
  if (f.kind) j["kind"] = to_string(*f.kind);
  if (f.color) j["color"] = to_string(*f.color);
  if (f.condition) j["condition"] = to_string(*f.condition);
  if (f.door_state) j["door_state"] = to_string(*f.door_state);
  return j;
}

ObjectFilter filter_from(const nlohmann::json& j) {
  if (!j.is_object()) throw ProbeError("object filter must be a JSON object");
  ObjectFilter f;
  try {
    for (const auto& [k, v] : j.items()) {
      const std::string s = v.get<std::string>();
      if (k == "kind") f.kind = parse_object_kind(s);
      else if (k == "color") f.color = parse_color(s);
      else if (k == "condition") f.condition = parse_condition(s);
      else if (k == "door_state") f.door_state = parse_door_state(s);
      else throw ProbeError("unknown filter key '" + k + "'");
    }
  } catch (const UnknownName& e) {
    throw ProbeError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ProbeError(std::string("object filter: ") + e.what());
  }
  return f;
}

std::string_view scope_name(Scope s) {
  switch (s) {
    case Scope::fov: return "fov";
    case Scope::room: return "room";
    case Scope::region: return "region";
  }
  return "?";
}

Scope scope_from(const std::string& s) {
  if (s == "fov") return Scope::fov;
  if (s == "room") return Scope::room;
  if (s == "region") return Scope::region;
  throw ProbeError("unknown scope '" + s + "'");
}

nlohmann::json cellref_json(const CellRef& r) {
  struct V {
    nlohmann::json operator()(const EgoPos& e) const { return {{"ahead", e.ahead}, {"lateral", e.lateral}}; }
    nlohmann::json operator()(const Position& p) const { return {{"col", p.col}, {"row", p.row}}; }
    nlohmann::json operator()(const std::string& id) const { return {{"door", id}}; }
    nlohmann::json operator()(const ObjectFilter& f) const { return {{"object", filter_json(f)}}; }
  };
  return std::visit(V{}, r.target);
}

CellRef cellref_from(const nlohmann::json& j) {
  if (!j.is_object()) throw ProbeError("cell reference must be a JSON object");
  if (j.contains("ahead")) return {EgoPos{j.at("ahead").get<int>(), j.value("lateral", 0)}};
  if (j.contains("col")) return {Position{j.at("col").get<int>(), j.at("row").get<int>()}};
  if (j.contains("door")) return {j.at("door").get<std::string>()};
  if (j.contains("object")) return {filter_from(j.at("object"))};
  throw ProbeError("cell reference needs ahead/lateral, col/row, door or object");
}

template <typename Q>
nlohmann::json scoped_json(const char* type, const Q& q) {
  nlohmann::json j{{"type", type}, {"filter", filter_json(q.filter)}, {"scope", scope_name(q.scope)}};
  if (q.region) {
    j["region"] = {{"col", q.region->origin.col}, {"row", q.region->origin.row},
                   {"w", q.region->width}, {"h", q.region->height}};
  }
  return j;
}

template <typename Q>
Q scoped_from(const nlohmann::json& j) {
  Q q;
  q.filter = filter_from(j.value("filter", nlohmann::json::object()));
  q.scope = scope_from(j.value("scope", std::string("fov")));
  if (j.contains("region")) {
    const auto& r = j.at("region");
    q.region = Region{{r.at("col").get<int>(), r.at("row").get<int>()}, r.at("w").get<int>(), r.at("h").get<int>()};
  }
  return q;
}

nlohmann::json fact_json(const Fact& f) {
  return std::visit([](const auto& q) { return query_to_json(Query{q}); }, f);
}

}  // namespace

nlohmann::json query_to_json(const Query& q) {
  struct V {
    nlohmann::json operator()(const PresenceQuery& p) const { return scoped_json("presence", p); }
    nlohmann::json operator()(const CountQuery& c) const { return scoped_json("count", c); }
    nlohmann::json operator()(const StateQuery& s) const {
      return {{"type", "state"}, {"target", cellref_json(s.target)}, {"attribute", enum_name(s.attribute, kAttributes)}};
    }
    nlohmann::json operator()(const LocationQuery& l) const {
      return {{"type", "location"}, {"filter", filter_json(l.filter)}};
    }
    nlohmann::json operator()(const CausalQuery& c) const {
      std::vector<int> script;
      for (Action a : c.script) script.push_back(action_code(a));
      return {{"type", "causal"}, {"script", script}, {"target", cellref_json(c.target)},
              {"outcome", enum_name(c.outcome, kOutcomes)}};
    }
    nlohmann::json operator()(const UncertaintyQuery& u) const {
      return {{"type", "uncertainty"}, {"fact", fact_json(u.fact)}};
    }
  };
  return std::visit(V{}, q);
}

Query query_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ProbeError("query must be a JSON object");
    const std::string type = j.at("type").get<std::string>();
    if (type == "presence") return scoped_from<PresenceQuery>(j);
    if (type == "count") return scoped_from<CountQuery>(j);
    if (type == "state") {
      return StateQuery{cellref_from(j.at("target")),
                        enum_value(j.at("attribute").get<std::string>(), kAttributes, "attribute")};
    }
    if (type == "location") return LocationQuery{filter_from(j.at("filter"))};
    if (type == "causal") {
      CausalQuery c;
      for (const auto& a : j.at("script")) {
        c.script.push_back(a.is_number_integer() ? action_from_code(a.get<int>()).value_or(Action::wait)
                                                 : parse_action(a.get<std::string>()));
        if (a.is_number_integer() && !action_from_code(a.get<int>())) {
          throw ProbeError(fmt::format("action code {} out of range", a.get<int>()));
        }
      }
      c.target = cellref_from(j.at("target"));
      c.outcome = enum_value(j.at("outcome").get<std::string>(), kOutcomes, "outcome");
      return c;
    }
    if (type == "uncertainty") {
      Query inner = query_from_json(j.at("fact"));
      if (auto* p = std::get_if<PresenceQuery>(&inner)) return UncertaintyQuery{*p};
      if (auto* c = std::get_if<CountQuery>(&inner)) return UncertaintyQuery{*c};
      if (auto* s = std::get_if<StateQuery>(&inner)) return UncertaintyQuery{*s};
      throw ProbeError("uncertainty facts must be presence, count or state queries");
    }
    throw ProbeError("unknown query type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ProbeError(std::string("malformed query: ") + e.what());
  } catch (const UnknownName& e) {
    throw ProbeError(e.what());
  }
}

// ---- ground truth -----------------------------------------------------------

std::string render_truth(const GroundTruth& t, AnswerType type) {
  struct V {
    AnswerType type;
    std::string operator()(bool b) const {
      if (type == AnswerType::presence) return b ? "yes" : "no";
      return b ? "true" : "false";
    }
    std::string operator()(int n) const { return std::to_string(n); }
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(const EgoPos& p) const {
      return fmt::format("{{\"steps_ahead\": {}, \"lateral\": {}}}", p.ahead, p.lateral);
    }
    std::string operator()(const CannotDetermine&) const { return "can't determine"; }
  };
  return std::visit(V{type}, t);
}

GroundTruth parse_literal_truth(std::string_view text, AnswerType type) {
  const std::string norm = normalize_answer(text);
  auto fail = [&]() -> GroundTruth {
    throw ProbeError(fmt::format("ground truth '{}' is not a valid {} answer", text, to_string(type)));
  };
  switch (type) {
    case AnswerType::presence: {
      auto b = parse_yes_no(norm);
      if (!b || norm.find(' ') != std::string::npos) return fail();
      return *b;
    }
    case AnswerType::count: {
      auto n = parse_count(norm);
      if (!n) return fail();
      return *n;
    }
    case AnswerType::location: {
      auto p = parse_location(text);
      if (!p) return fail();
      return *p;
    }
    case AnswerType::uncertainty:
      if (is_abstention(norm)) return CannotDetermine{};
      [[fallthrough]];
    case AnswerType::state:
    case AnswerType::causal: {
      if (norm.empty()) return fail();
      if (norm == "true" || norm == "yes") return true;
      if (norm == "false" || norm == "no") return false;
      return std::string(text);
    }
  }
  return fail();
}

namespace {

std::optional<Position> unique_object(const World& world, const ObjectFilter& f) {
  std::optional<Position> found;
  for (int r = 0; r < world.height(); ++r) {
    for (int c = 0; c < world.width(); ++c) {
      const auto& o = world.cell({c, r}).object;
      if (!o || !f.matches(*o)) continue;
      if (found) throw ProbeError("more than one " + f.describe() + " in the room");
      found = Position{c, r};
    }
  }
  return found;
}

void check_filter(const ObjectFilter& f) {
  if (f.door_state && f.kind && *f.kind != ObjectKind::door) {
    throw ProbeError("door_state filter on a non-door kind");
  }
}

template <typename Fn>
void for_each_in_scope(const World& world, Scope scope, const std::optional<Region>& region, Fn&& fn) {
  if (scope == Scope::fov) {
    Observation obs = observe(world);
    const int half = obs.half_width();
    for (int d = 0; d < obs.view.depth; ++d) {
      for (int l = -half; l <= half; ++l) {
        if (d == 0 && l == 0) continue;
        const FovCell& c = obs.at({d, l});
        if (c.visible) fn(c.world);
      }
    }
    return;
  }
  if (scope == Scope::region) {
    if (!region) throw ProbeError("region scope without a region");
    Position far{region->origin.col + region->width - 1, region->origin.row + region->height - 1};
    if (region->width < 1 || region->height < 1 || !world.in_bounds(region->origin) || !world.in_bounds(far)) {
      throw ProbeError("region lies outside the map");
    }
  }
  for (int r = 0; r < world.height(); ++r) {
    for (int c = 0; c < world.width(); ++c) {
      Position p{c, r};
      if (scope == Scope::region && !region->contains(p)) continue;
      fn(p);
    }
  }
}

template <typename Q>
int count_matches(const Q& q, const World& world) {
  check_filter(q.filter);
  int n = 0;
  for_each_in_scope(world, q.scope, q.region, [&](Position p) {
    const auto& o = world.cell(p).object;
    if (o && q.filter.matches(*o)) ++n;
  });
  return n;
}

const WorldObject& object_at(const World& world, Position p) {
  const auto& o = world.cell(p).object;
  if (!o || o->kind == ObjectKind::wall) {
    throw ProbeError(fmt::format("no object at ({},{})", p.col, p.row));
  }
  return *o;
}

std::string attribute_value(const World& world, Position p, Attribute a) {
  switch (a) {
    case Attribute::code: {
      const auto& o = world.cell(p).object;
      return o ? object_code(*o) : tile_code(world.cell(p).tiles);
    }
    case Attribute::color: return std::string(to_string(object_at(world, p).color));
    case Attribute::kind: return std::string(to_string(object_at(world, p).kind));
    case Attribute::condition: return std::string(to_string(object_at(world, p).condition));
    case Attribute::door_state: {
      const auto& o = object_at(world, p);
      if (o.kind != ObjectKind::door) throw ProbeError("door_state asked of a non-door");
      return std::string(to_string(o.door_state));
    }
  }
  return {};
}

GroundTruth fact_truth(const Fact& f, const World& world) {
  struct V {
    const World& w;
    GroundTruth operator()(const PresenceQuery& q) const { return count_matches(q, w) > 0; }
    GroundTruth operator()(const CountQuery& q) const { return count_matches(q, w); }
    GroundTruth operator()(const StateQuery& q) const {
      return attribute_value(w, resolve_cell(q.target, w), q.attribute);
    }
  };
  return std::visit(V{world}, f);
}

std::vector<Position> fact_cells(const Fact& f, const World& world) {
  std::vector<Position> cells;
  auto collect = [&](Scope scope, const std::optional<Region>& region) {
    for_each_in_scope(world, scope, region, [&](Position p) {
      const auto& o = world.cell(p).object;
      if (!(o && o->kind == ObjectKind::wall)) cells.push_back(p);
    });
  };
  if (const auto* p = std::get_if<PresenceQuery>(&f)) collect(p->scope, p->region);
  else if (const auto* c = std::get_if<CountQuery>(&f)) collect(c->scope, c->region);
  else cells.push_back(resolve_cell(std::get<StateQuery>(f).target, world));
  return cells;
}

}  // namespace

Position resolve_cell(const CellRef& ref, const World& world) {
  struct V {
    const World& w;
    Position operator()(const EgoPos& e) const { return ego_to_world(w.agent(), e); }
    Position operator()(const Position& p) const { return p; }
    Position operator()(const std::string& id) const {
      auto p = w.door_position(id);
      if (!p) throw ProbeError("no door with id '" + id + "'");
      return *p;
    }
    Position operator()(const ObjectFilter& f) const {
      check_filter(f);
      auto p = unique_object(w, f);
      if (!p) throw ProbeError("no " + f.describe() + " in the room");
      return *p;
    }
  };
  Position p = std::visit(V{world}, ref.target);
  if (!world.in_bounds(p)) throw ProbeError(fmt::format("cell ({},{}) is off the map", p.col, p.row));
  return p;
}

bool is_volatile(const World& world, Position p) {
  if (!world.in_bounds(p)) return false;
  if (world.cell(p).tiles.river) return true;
  if (world.plate_linked(p)) return true;
  for (int r = 0; r < world.height(); ++r) {
    for (int c = 0; c < world.width(); ++c) {
      const auto& river = world.cell({c, r}).tiles.river;
      if (!river) continue;
      Position q{c, r};
      for (int k = 0; k < river->speed; ++k) {
        q = q + forward_offset(river->direction);
        if (!world.in_bounds(q)) break;
        if (q == p) return true;
        if (!world.cell(q).tiles.river) break;
      }
    }
  }
  return false;
}

bool determinable(const Fact& fact, const World& world, const std::vector<Observation>& history) {
  std::vector<Observation> fallback;
  const std::vector<Observation>* hist = &history;
  if (history.empty()) {
    fallback.push_back(observe(world));
    hist = &fallback;
  }
  for (Position p : fact_cells(fact, world)) {
    std::optional<int> last_seen;
    for (const auto& obs : *hist) {
      if (obs.sees(p)) last_seen = std::max(last_seen.value_or(obs.step_index), obs.step_index);
    }
    if (!last_seen) return false;
    if (*last_seen < world.step_count() && is_volatile(world, p)) return false;
  }
  return true;
}

GroundTruth compute_ground_truth(const Query& q, const World& world, const std::vector<Observation>& history) {
  struct V {
    const World& w;
    const std::vector<Observation>& h;
    GroundTruth operator()(const PresenceQuery& p) const { return fact_truth(p, w); }
    GroundTruth operator()(const CountQuery& c) const { return fact_truth(c, w); }
    GroundTruth operator()(const StateQuery& s) const { return fact_truth(s, w); }
    GroundTruth operator()(const LocationQuery& l) const {
      check_filter(l.filter);
      Observation obs = observe(w);
      std::optional<EgoPos> found;
      const int half = obs.half_width();
      for (int d = 0; d < obs.view.depth; ++d) {
        for (int lat = -half; lat <= half; ++lat) {
          if (d == 0 && lat == 0) continue;
          const FovCell& c = obs.at({d, lat});
          if (!c.visible || !c.object || !l.filter.matches(*c.object)) continue;
          if (found) throw ProbeError("more than one " + l.filter.describe() + " in view");
          found = EgoPos{d, lat};
        }
      }
      if (!found) throw ProbeError("no " + l.filter.describe() + " in view");
      return *found;
    }
    GroundTruth operator()(const CausalQuery& c) const {
      Position p = resolve_cell(c.target, w);
      World after = w.simulate(c.script);
      const Cell& cell = after.cell(p);
      switch (c.outcome) {
        case Outcome::passable: return after.passable(p);
        case Outcome::fire_active: return cell.tiles.burning();
        case Outcome::flood_active: return cell.tiles.flooded();
        case Outcome::door_state: return attribute_value(after, p, Attribute::door_state);
        case Outcome::object_code: return attribute_value(after, p, Attribute::code);
        case Outcome::condition: return attribute_value(after, p, Attribute::condition);
      }
      return false;
    }
    GroundTruth operator()(const UncertaintyQuery& u) const {
      // Ill-posed facts raise before determinability is considered.
      GroundTruth truth = fact_truth(u.fact, w);
      if (!determinable(u.fact, w, h)) return CannotDetermine{};
      return truth;
    }
  };
  return std::visit(V{world, history}, q);
}

void validate_probe(const Probe& p) {
  if (p.query.has_value() == p.literal.has_value()) {
    throw ProbeError("probe '" + p.id + "' needs exactly one of a query or a literal answer");
  }
  if (p.policy == ConflictPolicy::testimony_first && p.query) {
    throw ProbeError("probe '" + p.id + "': testimony_first applies only to operator-recorded answers");
  }
  if (p.query && answer_type_of(*p.query) != p.answer_type) {
    throw ProbeError(fmt::format("probe '{}': query answers {} but probe is typed {}", p.id,
                                 to_string(answer_type_of(*p.query)), to_string(p.answer_type)));
  }
  if (p.segment < 0 || p.step < 0) throw ProbeError("probe '" + p.id + "' has a negative placement");
}

// ---- grading ----------------------------------------------------------------

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim_view(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> words(std::string_view normalized) {
  std::vector<std::string> out;
  std::istringstream in{std::string(normalized)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::optional<int> number_word(const std::string& w) {
  static const std::vector<std::pair<std::string, int>> table = {
      {"zero", 0},       {"one", 1},        {"two", 2},       {"three", 3},     {"four", 4},
      {"five", 5},       {"six", 6},        {"seven", 7},     {"eight", 8},     {"nine", 9},
      {"ten", 10},       {"eleven", 11},    {"twelve", 12},   {"thirteen", 13}, {"fourteen", 14},
      {"fifteen", 15},   {"sixteen", 16},   {"seventeen", 17}, {"eighteen", 18}, {"nineteen", 19},
      {"twenty", 20},    {"thirty", 30},    {"forty", 40},    {"fifty", 50},    {"sixty", 60},
      {"seventy", 70},   {"eighty", 80},    {"ninety", 90},   {"none", 0},
  };
  for (const auto& [name, v] : table) {
    if (name == w) return v;
  }
  return std::nullopt;
}

}  // namespace

std::string extract_answer(std::string_view text) {
  std::optional<std::string> last;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim_view(text.substr(start, end - start));
    while (!line.empty() && (line.front() == '*' || line.front() == '#' || line.front() == '>')) line.remove_prefix(1);
    line = trim_view(line);
    if (line.size() >= 7 && lower(line.substr(0, 7)) == "answer:") {
      std::string_view rest = trim_view(line.substr(7));
      while (!rest.empty() && rest.front() == '*') rest.remove_prefix(1);
      last = std::string(trim_view(rest));
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  return last ? *last : std::string(trim_view(text));
}

std::string normalize_answer(std::string_view text) {
  std::string cleaned;
  for (unsigned char c : text) {
    if (c == '-' || c == '_' || c == '/' || c == ',' || c == ';' || c == ':') {
      cleaned += ' ';
    } else if (std::isalnum(c) || std::isspace(c)) {
      cleaned += static_cast<char>(std::tolower(c));
    } else if (c >= 0x80) {
      cleaned += static_cast<char>(c);
    }
  }
  std::string out;
  for (auto& w : words(cleaned)) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (w == "gray") w = "grey";
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

bool is_abstention(std::string_view normalized) {
  static const std::vector<std::string_view> phrases = {
      "cant determine", "cannot determine", "can not determine", "cannot be determined", "cant be determined",
      "can not be determined", "unknown", "undetermined", "indeterminate", "not determinable",
      "i dont know", "dont know", "unable to determine", "not enough information", "insufficient information",
      "cannot tell", "cant tell", "cannot know", "cant know", "impossible to determine", "cannot say", "cant say",
  };
  for (auto p : phrases) {
    if (normalized.substr(0, p.size()) == p && (normalized.size() == p.size() || normalized[p.size()] == ' ')) {
      return true;
    }
  }
  return false;
}

std::optional<bool> parse_yes_no(std::string_view text) {
  auto ws = words(normalize_answer(text));
  if (ws.empty()) return std::nullopt;
  if (ws[0] == "yes" || ws[0] == "true" || ws[0] == "y") return true;
  if (ws[0] == "no" || ws[0] == "false" || ws[0] == "n") return false;
  return std::nullopt;
}

std::optional<int> parse_count(std::string_view text) {
  auto ws = words(normalize_answer(text));
  for (std::size_t i = 0; i < ws.size(); ++i) {
    const auto& w = ws[i];
    if (!w.empty() && std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c); })) {
      if (w.size() > 9) return std::nullopt;
      return std::stoi(w);
    }
    auto first = number_word(w);
    if (!first) continue;
    int total = 0;
    int current = *first;
    for (std::size_t k = i + 1; k < ws.size(); ++k) {
      if (ws[k] == "hundred" && current > 0 && current < 10) {
        total += current * 100;
        current = 0;
      } else if (ws[k] == "and" && total > 0) {
        continue;
      } else if (auto v = number_word(ws[k]); v && ws[k] != "none") {
        if (*v < 10 && current % 10 == 0 && current >= 20) {
          current += *v;
        } else if (current == 0) {
          current = *v;
        } else {
          break;
        }
      } else {
        break;
      }
    }
    return total + current;
  }
  return std::nullopt;
}

std::optional<EgoPos> parse_location(std::string_view text) {
  const std::string s = lower(text);
  if (auto open = s.find('{'); open != std::string::npos) {
    auto close = s.rfind('}');
    if (close != std::string::npos && close > open) {
      try {
        auto j = nlohmann::json::parse(s.substr(open, close - open + 1));
        if (j.contains("steps_ahead") && j.contains("lateral")) {
          return EgoPos{j.at("steps_ahead").get<int>(), j.at("lateral").get<int>()};
        }
      } catch (const nlohmann::json::exception&) {
      }
    }
  }
  static const std::regex ahead_re(R"(ahead\s*[:=]?\s*(-?\d+))");
  static const std::regex steps_re(R"((\d+)\s*steps?\s*ahead)");
  static const std::regex side_re(R"(\b([lr])\s?(\d+)\b)");
  static const std::regex lateral_re(R"(lateral\s*[:=]?\s*(-?\d+))");
  static const std::regex trailing_re(R"(ahead\s*[:=]?\s*-?\d+\s*[,;]\s*(-?\d+)\b)");
  static const std::regex words_re(R"((\d+)\s*(?:cells?|steps?|squares?)?\s*(?:to\s*the\s*)?(left|right))");
  static const std::regex center_re(R"(\b(center|centre|straight ahead|directly ahead)\b)");
  static const std::regex int_re(R"(-?\d+)");

  std::smatch m;
  std::optional<int> ahead;
  if (std::regex_search(s, m, ahead_re)) ahead = std::stoi(m[1]);
  else if (std::regex_search(s, m, steps_re)) ahead = std::stoi(m[1]);
  if (ahead) {
    std::optional<int> lateral;
    if (std::regex_search(s, m, side_re)) {
      lateral = std::stoi(m[2]) * (m[1] == "l" ? -1 : 1);
    } else if (std::regex_search(s, m, lateral_re)) {
      lateral = std::stoi(m[1]);
    } else if (std::regex_search(s, m, words_re)) {
      lateral = std::stoi(m[1]) * (m[2] == "left" ? -1 : 1);
    } else if (std::regex_search(s, m, trailing_re)) {
      lateral = std::stoi(m[1]);
    } else if (std::regex_search(s, m, center_re)) {
      lateral = 0;
    }
    if (lateral) return EgoPos{*ahead, *lateral};
    return std::nullopt;
  }
  std::vector<int> ints;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), int_re); it != std::sregex_iterator(); ++it) {
    ints.push_back(std::stoi((*it)[0]));
  }
  if (ints.size() == 2) return EgoPos{ints[0], ints[1]};
  return std::nullopt;
}

Grade grade(std::string_view answer_text, const GroundTruth& truth, AnswerType type) {
  Grade g;
  const std::string raw = extract_answer(answer_text);
  g.extracted = normalize_answer(raw);
  if (const auto* code = std::get_if<std::string>(&truth); g.extracted.empty() && code && !raw.empty() &&
                                                           normalize_answer(*code).empty()) {
    // Tile codes such as ".." or "^^" are all punctuation.
    g.extracted = raw;
    g.verdict = raw == trim_view(*code) ? Verdict::correct : Verdict::hallucinated;
    g.reason = g.verdict == Verdict::correct ? "matches ground truth" : "expected " + *code;
    return g;
  }
  if (g.extracted.empty()) {
    g.verdict = Verdict::unparseable;
    g.reason = "empty answer";
    return g;
  }
  const bool truth_cd = std::holds_alternative<CannotDetermine>(truth);
  if (is_abstention(g.extracted)) {
    g.verdict = truth_cd ? Verdict::correct : Verdict::hallucinated;
    g.reason = truth_cd ? "abstained on an undeterminable fact" : "abstained although the answer is determinable";
    return g;
  }
  if (truth_cd) {
    g.verdict = Verdict::hallucinated;
    g.reason = "asserted an answer the evidence cannot support";
    return g;
  }
  auto decide = [&](bool ok, const std::string& expected) {
    g.verdict = ok ? Verdict::correct : Verdict::hallucinated;
    g.reason = ok ? "matches ground truth" : "expected " + expected;
  };
  const std::string expected = render_truth(truth, type);
  if (const bool* b = std::get_if<bool>(&truth)) {
    auto v = parse_yes_no(raw);
    if (!v) {
      g.verdict = Verdict::unparseable;
      g.reason = "expected yes/no or true/false";
      return g;
    }
    decide(*v == *b, expected);
  } else if (const int* n = std::get_if<int>(&truth)) {
    auto v = parse_count(raw);
    if (!v) {
      g.verdict = Verdict::unparseable;
      g.reason = "no number found";
      return g;
    }
    decide(*v == *n, expected);
  } else if (const EgoPos* p = std::get_if<EgoPos>(&truth)) {
    auto v = parse_location(raw);
    if (!v) {
      g.verdict = Verdict::unparseable;
      g.reason = "no location found";
      return g;
    }
    decide(*v == *p, expected);
  } else {
    decide(g.extracted == normalize_answer(std::get<std::string>(truth)), expected);
  }
  return g;
}

}  // namespace refgrid
