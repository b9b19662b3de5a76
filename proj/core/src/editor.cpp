#include "refgrid/editor.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "refgrid/serializers.hpp"

namespace refgrid {

using nlohmann::json;
namespace fs = std::filesystem;

ApiResponse ApiResponse::json(int status, const nlohmann::json& body) {
  return {status, "application/json", body.dump()};
}

ApiResponse ApiResponse::text(int status, std::string body, std::string content_type) {
  return {status, std::move(content_type), std::move(body)};
}

const std::map<std::string, Action>& recorder_keymap() {
  static const std::map<std::string, Action> keys = {
      {"w", Action::forward}, {"a", Action::turn_left}, {"d", Action::turn_right}, {"s", Action::wait},
      {"g", Action::pickup},  {"f", Action::drop},      {"t", Action::toggle},
  };
  return keys;
}

LevelSpec blank_level(int width, int height, std::string id) {
  if (width < 3 || height < 3 || width > 64 || height > 64) {
    throw ApiError(422, fmt::format("room size {}x{} outside 3..64", width, height));
  }
  LevelSpec s;
  s.width = width;
  s.height = height;
  s.meta.id = std::move(id);
  s.cells.assign(static_cast<std::size_t>(width * height), "..");
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (r == 0 || c == 0 || r == height - 1 || c == width - 1) s.code_at({c, r}) = "##";
    }
  }
  s.meta.agent_start = {width / 2, height / 2};
  s.code_at(s.meta.agent_start) = "@.";
  return s;
}

struct EditorService::Session {
  std::mutex mu;
  std::string id;
  bool recording = false;
  LevelSpec spec;
  std::string level_file;
  std::uint64_t seed = 0;
  bool dirty = false;
  std::optional<RecordSession> recorder;
};

EditorService::EditorService(EditorOptions options) : options_(std::move(options)) {
  if (!options_.registry) options_.registry = std::make_shared<const ProbeRegistry>(ProbeRegistry::with_builtins());
}

EditorService::~EditorService() = default;

namespace {

json level_error_json(const LevelError& e) {
  json d{{"code", to_string(e.code())}, {"message", e.detail()}};
  if (e.line() > 0) {
    d["line"] = e.line();
    d["column"] = e.column();
  }
  if (e.cell()) d["cell"] = {e.cell()->col, e.cell()->row};
  return d;
}

[[noreturn]] void unprocessable(const std::string& msg, json detail = nullptr) {
  throw ApiError(422, msg, std::move(detail));
}

template <typename T>
T field(const json& body, const char* key) {
  if (!body.contains(key)) unprocessable(fmt::format("missing field '{}'", key));
  try {
    return body.at(key).get<T>();
  } catch (const json::exception&) {
    unprocessable(fmt::format("field '{}' has the wrong type", key));
  }
}

template <typename T>
T field_or(const json& body, const char* key, T fallback) {
  return body.contains(key) ? field<T>(body, key) : fallback;
}

Position cell_of(const json& body, const LevelSpec& spec) {
  Position p{field<int>(body, "col"), field<int>(body, "row")};
  if (!spec.in_bounds(p)) unprocessable(fmt::format("cell ({},{}) is outside the {}x{} grid", p.col, p.row, spec.width, spec.height));
  return p;
}

void validated_commit(LevelSpec& target, LevelSpec candidate) {
  canonicalize(candidate);
  try {
    validate_level(candidate);
  } catch (const LevelError& e) {
    unprocessable(e.what(), level_error_json(e));
  }
  target = std::move(candidate);
}

ViewSize parse_view(const json& v) {
  if (v.is_number_integer()) return {v.get<int>(), v.get<int>()};
  if (!v.is_string()) unprocessable("view_size must be an integer or \"DxW\"");
  auto s = v.get<std::string>();
  auto x = s.find('x');
  auto num = [&](std::string_view t) {
    int n = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), n);
    if (ec != std::errc() || p != t.data() + t.size()) unprocessable("bad view_size '" + s + "'");
    return n;
  };
  if (x == std::string::npos) {
    int n = num(s);
    return {n, n};
  }
  return {num(std::string_view(s).substr(0, x)), num(std::string_view(s).substr(x + 1))};
}

TileOverlay overlay_from(const std::string& kind, const json& params) {
  try {
    if (kind == "river") {
      return River{parse_direction(field<std::string>(params, "dir")), field_or<int>(params, "speed", 1)};
    }
    if (kind == "fire") return Fire{field_or<bool>(params, "active", true)};
    if (kind == "flood") return Flood{field<int>(params, "rise_step"), false};
    if (kind == "plate") {
      return PressurePlate{parse_plate_effect(field_or<std::string>(params, "effect", "continuous")),
                           field<std::string>(params, "link"), false};
    }
    if (kind == "dark") return DarkZone{};
  } catch (const UnknownName& e) {
    unprocessable(e.what());
  }
  unprocessable("unknown overlay kind '" + kind + "'");
}

std::string edit_map_code(const LevelSpec& spec, Position p) {
  const std::string& code = spec.code_at(p);
  if (code != "..") return code;
  CellTiles tiles;
  for (const auto& o : spec.overlays) {
    if (o.pos == p) tiles.add(o.overlay);
  }
  return tile_code(tiles);
}

json probe_json(const ProbeRecord& r) {
  return {{"segment", r.segment},       {"step", r.step},
          {"probe_type", r.probe_type}, {"question", r.question},
          {"ground_truth", r.ground_truth}, {"metadata", r.metadata}};
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

}  // namespace

std::shared_ptr<EditorService::Session> EditorService::session(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ApiError(404, "no session '" + id + "'");
  return it->second;
}

ApiResponse EditorService::create_session(const json& body) {
  auto s = std::make_shared<Session>();
  s->id = fmt::format("s{}", next_id_++);
  s->seed = field_or<std::uint64_t>(body, "seed", 0);
  try {
    if (body.contains("level")) {
      s->spec = parse_level(field<std::string>(body, "level"));
      s->level_file = field_or<std::string>(body, "level_file", "levels/" + s->spec.meta.id + ".txt");
    } else if (body.contains("level_file")) {
      s->level_file = field<std::string>(body, "level_file");
      fs::path path = options_.levels_root / s->level_file;
      if (!fs::is_regular_file(path)) throw ApiError(404, "level file '" + s->level_file + "' not found");
      s->spec = load_level_file(path.string());
    } else {
      s->spec = blank_level(field_or<int>(body, "width", 9), field_or<int>(body, "height", 9),
                            field_or<std::string>(body, "id", "untitled"));
      s->level_file = "levels/" + s->spec.meta.id + ".txt";
    }
  } catch (const LevelError& e) {
    unprocessable(e.what(), level_error_json(e));
  }
  {
    std::lock_guard lock(mu_);
    sessions_[s->id] = s;
  }
  return ApiResponse::json(201, {{"id", s->id}, {"mode", "edit"}});
}

namespace {

json state_json(const std::string& id, bool recording, const LevelSpec& spec, const std::string& level_file,
                std::uint64_t seed, bool dirty, const std::optional<RecordSession>& rec) {
  json out{{"id", id},
           {"mode", recording ? "record" : "edit"},
           {"dirty", dirty},
           {"level_id", spec.meta.id},
           {"level_file", level_file},
           {"seed", seed},
           {"width", spec.width},
           {"height", spec.height}};
  if (recording) {
    const World& w = rec->world();
    std::string full = w.render_full();
    out["grid"] = full;
    out["map"] = split_lines(full);
    out["observation"] = serialize_memory(rec->observations());
    out["step"] = rec->step();
    out["segment"] = rec->segment();
    out["agent"] = {{"col", w.agent().pos.col}, {"row", w.agent().pos.row}, {"facing", to_string(w.agent().facing)}};
    out["carrying"] = w.inventory() ? json(describe(*w.inventory())) : json(nullptr);
    Trajectory t = rec->finalize();
    out["actions"] = t.segments.back().actions;
    json probes = json::array();
    for (const auto& p : t.probes) probes.push_back(probe_json(p));
    out["probes"] = probes;
    out["can_undo"] = !t.segments.back().actions.empty();
  } else {
    json rows = json::array();
    for (int r = 0; r < spec.height; ++r) {
      std::string row;
      for (int c = 0; c < spec.width; ++c) row += (c ? " " : "") + edit_map_code(spec, {c, r});
      rows.push_back(row);
    }
    out["map"] = rows;
    World preview = World::create(spec, seed);
    out["grid"] = preview.render_full();
    out["observation"] = serialize_memory({observe(preview)});
    out["step"] = 0;
    out["segment"] = 0;
    out["level"] = emit_level(spec);
  }
  return out;
}

}  // namespace

ApiResponse EditorService::dispatch(Session& s, std::string_view method, std::string_view action, const json& body) {
  auto need_edit = [&] {
    if (s.recording) throw ApiError(409, "session is in record mode; switch to edit mode first");
  };
  auto need_record = [&] {
    if (!s.recording) throw ApiError(409, "session is in edit mode; switch to record mode first");
  };
  auto state = [&](int status = 200) {
    return ApiResponse::json(status, state_json(s.id, s.recording, s.spec, s.level_file, s.seed, s.dirty, s.recorder));
  };
  auto route = [&](std::string_view m, std::string_view a) { return method == m && action == a; };

  if (route("GET", "state")) return state();

  if (route("GET", "export")) {
    s.dirty = false;
    return ApiResponse::text(200, emit_level(s.spec));
  }

  if (route("POST", "objects")) {
    need_edit();
    Position p = cell_of(body, s.spec);
    auto code = field<std::string>(body, "code");
    json params = body.value("params", json::object());
    if (!is_known_cell_code(code)) unprocessable("unknown cell code '" + code + "'");
    const std::string& old = s.spec.code_at(p);
    if (old == code && params.empty()) {
      unprocessable(fmt::format("cell ({},{}) already holds '{}'", p.col, p.row, code));
    }
    if (old == "@." && code != "@.") unprocessable("the agent start cannot be overwritten; place '@.' elsewhere first");
    LevelSpec next = s.spec;
    if (code == "@.") {
      next.code_at(next.meta.agent_start) = "..";
      next.meta.agent_start = p;
    }
    next.code_at(p) = code;
    std::erase_if(next.doors, [&](const DoorSetting& d) { return d.pos == p; });
    next.texts.erase(p);
    if (auto obj = object_from_code(code)) {
      try {
        if (obj->kind == ObjectKind::door && (params.contains("id") || params.contains("state"))) {
          next.doors.push_back({p, field_or<std::string>(params, "id", ""),
                                parse_door_state(field_or<std::string>(params, "state", "closed"))});
        }
      } catch (const UnknownName& e) {
        unprocessable(e.what());
      }
      if (is_testimony(obj->kind)) {
        TextEntry t{field<std::string>(params, "text"), std::nullopt};
        if (params.contains("accuracy")) t.accuracy = field<double>(params, "accuracy");
        next.texts[p] = t;
      }
    }
    validated_commit(s.spec, std::move(next));
    s.dirty = true;
    return state();
  }

  if (route("POST", "overlays")) {
    need_edit();
    Position p = cell_of(body, s.spec);
    auto kind = field<std::string>(body, "kind");
    json params = body.value("params", json::object());
    bool remove = field_or<bool>(body, "remove", false);
    LevelSpec next = s.spec;
    if (kind == "random") {
      auto before = next.randomized_sets.size();
      std::erase_if(next.randomized_sets, [&](const RandomSet& r) { return r.origin == p; });
      if (remove) {
        if (before == next.randomized_sets.size()) unprocessable(fmt::format("no random set at ({},{})", p.col, p.row));
      } else {
        next.randomized_sets.push_back({p, field<int>(params, "w"), field<int>(params, "h"),
                                        field<std::string>(params, "code"), field<int>(params, "count")});
      }
    } else {
      TileOverlay o = remove ? TileOverlay{DarkZone{}} : overlay_from(kind, params);
      auto same = [&](const OverlayPlacement& op) { return op.pos == p && overlay_kind_name(op.overlay) == kind; };
      auto before = next.overlays.size();
      std::erase_if(next.overlays, same);
      if (remove) {
        if (before == next.overlays.size()) unprocessable(fmt::format("no {} overlay at ({},{})", kind, p.col, p.row));
      } else {
        next.overlays.push_back({p, o});
      }
    }
    validated_commit(s.spec, std::move(next));
    s.dirty = true;
    return state();
  }

  if (route("PUT", "meta")) {
    need_edit();
    auto key = field<std::string>(body, "key");
    if (!body.contains("value")) unprocessable("missing field 'value'");
    const json& v = body.at("value");
    LevelSpec next = s.spec;
    LevelMeta& m = next.meta;
    try {
      if (key == "id") {
        m.id = v.get<std::string>();
      } else if (key == "agent_dir") {
        auto d = v.get<std::string>();
        if (d == "random") {
          m.agent_dir.reset();
        } else {
          m.agent_dir = parse_direction(d);
        }
      } else if (key == "agent_start") {
        Position p = v.is_array() ? Position{v.at(0).get<int>(), v.at(1).get<int>()}
                                  : Position{v.at("col").get<int>(), v.at("row").get<int>()};
        if (!next.in_bounds(p)) unprocessable("agent_start is outside the grid");
        if (next.code_at(p) != "..") unprocessable(fmt::format("cell ({},{}) is not empty floor", p.col, p.row));
        next.code_at(m.agent_start) = "..";
        next.code_at(p) = "@.";
        m.agent_start = p;
      } else if (key == "view_size") {
        m.view_size = parse_view(v);
      } else if (key == "see_through_walls") {
        m.see_through_walls = v.get<bool>();
      } else if (key == "max_steps") {
        m.max_steps = v.get<int>();
      } else if (key == "soak_duration") {
        m.soak_duration = v.get<int>();
      } else {
        unprocessable("unknown meta key '" + key + "'");
      }
    } catch (const json::exception&) {
      unprocessable("meta '" + key + "' has the wrong type");
    } catch (const UnknownName& e) {
      unprocessable(e.what());
    }
    validated_commit(s.spec, std::move(next));
    s.dirty = true;
    return state();
  }

  if (route("POST", "mode")) {
    auto mode = field<std::string>(body, "mode");
    if (mode == "record") {
      if (s.recording) throw ApiError(409, "session is already recording");
      s.seed = field_or<std::uint64_t>(body, "seed", s.seed);
      s.level_file = field_or<std::string>(body, "level_file", s.level_file);
      try {
        s.recorder.emplace(s.spec, s.level_file, s.seed, options_.registry);
      } catch (const LevelError& e) {
        unprocessable(e.what(), level_error_json(e));
      }
      s.recording = true;
    } else if (mode == "edit") {
      s.recorder.reset();
      s.recording = false;
    } else {
      unprocessable("mode must be 'edit' or 'record'");
    }
    return state();
  }

  if (route("POST", "step")) {
    need_record();
    Action a = Action::wait;
    try {
      if (body.contains("key")) {
        auto k = field<std::string>(body, "key");
        std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        auto it = recorder_keymap().find(k);
        if (it == recorder_keymap().end()) unprocessable("key '" + k + "' is not bound to an action");
        a = it->second;
      } else if (body.contains("action") && body.at("action").is_number_integer()) {
        auto code = action_from_code(body.at("action").get<int>());
        if (!code) unprocessable("action code outside 0..6");
        a = *code;
      } else {
        a = parse_action(field<std::string>(body, "action"));
      }
    } catch (const UnknownName& e) {
      unprocessable(e.what());
    }
    s.recorder->append(a);
    s.dirty = true;
    return state();
  }

  if (route("POST", "undo")) {
    need_record();
    bool undone = s.recorder->undo();
    if (undone) s.dirty = true;
    auto st = state_json(s.id, s.recording, s.spec, s.level_file, s.seed, s.dirty, s.recorder);
    st["undone"] = undone;
    return ApiResponse::json(200, st);
  }

  if (route("POST", "probes")) {
    need_record();
    json metadata = body.value("metadata", json::object());
    try {
      const ProbeRecord& r = s.recorder->plant(field<std::string>(body, "probe_type"),
                                               field_or<std::string>(body, "question", ""),
                                               field_or<std::string>(body, "ground_truth", ""), metadata);
      s.dirty = true;
      return ApiResponse::json(201, probe_json(r));
    } catch (const ProbeError& e) {
      unprocessable(e.what());
    } catch (const RegistryError& e) {
      unprocessable(e.what());
    } catch (const UnknownName& e) {
      unprocessable(e.what());
    }
  }

  if (route("POST", "segments")) {
    need_record();
    auto file = field<std::string>(body, "level_file");
    LevelSpec next;
    try {
      if (body.contains("level")) {
        next = parse_level(field<std::string>(body, "level"));
      } else {
        fs::path path = options_.levels_root / file;
        if (!fs::is_regular_file(path)) throw ApiError(404, "level file '" + file + "' not found");
        next = load_level_file(path.string());
      }
      auto seed = field_or<std::uint64_t>(body, "seed", s.seed);
      s.recorder->next_segment(next, file, seed);
    } catch (const LevelError& e) {
      unprocessable(e.what(), level_error_json(e));
    }
    s.dirty = true;
    return state();
  }

  if (route("GET", "trajectory")) {
    need_record();
    s.dirty = false;
    return ApiResponse::text(200, emit_trajectory(s.recorder->finalize()), "application/json");
  }

  static const std::vector<std::string> known = {"state", "export", "objects", "overlays", "meta", "mode",
                                                 "step", "undo", "probes", "segments", "trajectory"};
  if (std::find(known.begin(), known.end(), action) != known.end()) {
    throw ApiError(405, fmt::format("{} is not allowed on '{}'", method, action));
  }
  throw ApiError(404, "no route '" + std::string(action) + "'");
}

ApiResponse EditorService::handle(std::string_view method, std::string_view path, std::string_view body) {
  try {
    json j = json::object();
    if (body.find_first_not_of(" \t\r\n") != std::string_view::npos) {
      try {
        j = json::parse(body);
      } catch (const json::parse_error& e) {
        throw ApiError(400, std::string("malformed JSON body: ") + e.what());
      }
      if (!j.is_object()) throw ApiError(400, "request body must be a JSON object");
    }

    std::vector<std::string> parts;
    for (std::size_t i = 0; i < path.size();) {
      auto next = path.find('/', i);
      if (next == std::string_view::npos) next = path.size();
      if (next > i) parts.emplace_back(path.substr(i, next - i));
      i = next + 1;
    }

    if (parts.size() == 1 && parts[0] == "capabilities") {
      if (method != "GET") throw ApiError(405, "use GET");
      json keys = json::object();
      for (const auto& [k, a] : recorder_keymap()) keys[k] = to_string(a);
      json actions = json::array();
      for (int c = 0; c < kActionCount; ++c) actions.push_back({{"code", c}, {"name", to_string(*action_from_code(c))}});
      return ApiResponse::json(
          200, {{"actions", actions},
                {"keymap", keys},
                {"probe_types", options_.registry->names()},
                {"serializers", {"grid", "memory", "symbolic"}},
                {"object_kinds", {"wall", "door", "key", "ball", "box", "boulder", "goal", "notice_board", "signpost"}},
                {"colors", {"red", "green", "blue", "purple", "yellow", "grey"}},
                {"overlay_kinds", {"river", "fire", "flood", "plate", "dark", "random"}},
                {"meta_keys", {"id", "agent_dir", "agent_start", "view_size", "see_through_walls", "max_steps",
                               "soak_duration"}}});
    }
    if (parts.empty() || parts[0] != "sessions") throw ApiError(404, "no route '" + std::string(path) + "'");
    if (parts.size() == 1) {
      if (method == "POST") return create_session(j);
      if (method == "GET") {
        std::lock_guard lock(mu_);
        json ids = json::array();
        for (const auto& [id, s] : sessions_) ids.push_back(id);
        return ApiResponse::json(200, {{"sessions", ids}});
      }
      throw ApiError(405, "use GET or POST");
    }
    if (parts.size() == 2) {
      if (method != "DELETE") throw ApiError(405, "use DELETE");
      session(parts[1]);
      std::lock_guard lock(mu_);
      sessions_.erase(parts[1]);
      return ApiResponse::json(200, {{"deleted", parts[1]}});
    }
    if (parts.size() != 3) throw ApiError(404, "no route '" + std::string(path) + "'");
    auto s = session(parts[1]);
    std::lock_guard lock(s->mu);
    return dispatch(*s, method, parts[2], j);
  } catch (const ApiError& e) {
    json err{{"error", e.what()}, {"status", e.status()}};
    if (!e.detail().is_null()) err["detail"] = e.detail();
    return ApiResponse::json(e.status(), err);
  } catch (const std::exception& e) {
    return ApiResponse::json(500, {{"error", e.what()}, {"status", 500}});
  }
}

}  // namespace refgrid
