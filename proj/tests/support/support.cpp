#include "support.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

#include "refgrid/probe_registry.hpp"

namespace refgrid::testing {

namespace fs = std::filesystem;

fs::path source_dir() { return fs::path(REFGRID_SOURCE_DIR); }

fs::path fixture(const std::string& relative) { return source_dir() / relative; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::vector<fs::path> list(const fs::path& dir, const std::string& ext) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<fs::path> fixture_trajectories() { return list(fixture("trajectories"), ".json"); }
std::vector<fs::path> fixture_levels() { return list(fixture("levels"), ".txt"); }

std::shared_ptr<const ProbeRegistry> standard_registry() {
  static const auto reg = [] {
    auto r = std::make_shared<ProbeRegistry>(ProbeRegistry::with_builtins());
    r->register_type(spatial_relation_probe_type());
    r->freeze();
    return std::shared_ptr<const ProbeRegistry>(r);
  }();
  return reg;
}

int pick(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
bool coin(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

LevelSpec room(int width, int height, Position agent, Direction facing) {
  LevelSpec s;
  s.width = width;
  s.height = height;
  s.cells.assign(static_cast<std::size_t>(width * height), "..");
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (r == 0 || c == 0 || r == height - 1 || c == width - 1) s.code_at({c, r}) = "##";
    }
  }
  s.code_at(agent) = "@.";
  s.meta.id = "room";
  s.meta.agent_start = agent;
  s.meta.agent_dir = facing;
  return s;
}

void put(LevelSpec& spec, Position p, const std::string& code) { spec.code_at(p) = code; }

void overlay(LevelSpec& spec, Position p, TileOverlay o) { spec.overlays.push_back({p, std::move(o)}); }

namespace {

const char kColors[] = {'r', 'g', 'b', 'y', 'p', 'e'};

std::string random_code(Rng& rng, const std::string& kinds) {
  std::string code;
  code += kColors[pick(rng, 0, 5)];
  code += kinds[static_cast<std::size_t>(pick(rng, 0, static_cast<int>(kinds.size()) - 1))];
  return code;
}

std::string random_text(Rng& rng) {
  static const std::vector<std::string> words = {"the", "red", "door", "is", "open", "\"quoted\"", "back\\slash",
                                                 "caf\xc3\xa9", "three", "balls", "tab\there", "#hash", "=", "x"};
  std::string out;
  int n = pick(rng, 1, 8);
  for (int i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += words[static_cast<std::size_t>(pick(rng, 0, static_cast<int>(words.size()) - 1))];
  }
  return out;
}

}  // namespace

LevelSpec random_level(Rng& rng) {
  const int w = pick(rng, 5, 14);
  const int h = pick(rng, 5, 12);
  Position agent{pick(rng, 1, w - 2), pick(rng, 1, h - 2)};
  LevelSpec s = room(w, h, agent);

  auto& m = s.meta;
  m.id = "lvl_" + std::to_string(pick(rng, 0, 99999));
  m.agent_dir = coin(rng, 0.2) ? std::nullopt : std::optional<Direction>(kAllDirections[static_cast<std::size_t>(pick(rng, 0, 3))]);
  m.view_size = {pick(rng, 1, 9), 2 * pick(rng, 0, 5) + 1};
  m.see_through_walls = coin(rng, 0.3);
  m.max_steps = pick(rng, 1, 500);
  m.soak_duration = pick(rng, 1, 6);

  int door_n = 0;
  for (int r = 1; r < h - 1; ++r) {
    for (int c = 1; c < w - 1; ++c) {
      Position p{c, r};
      if (p == agent) continue;
      double x = std::uniform_real_distribution<double>(0, 1)(rng);
      if (x < 0.55) continue;
      if (x < 0.65) {
        put(s, p, "##");
      } else if (x < 0.85) {
        put(s, p, random_code(rng, "KBXOG"));
      } else if (x < 0.92) {
        put(s, p, random_code(rng, "D"));
        if (coin(rng, 0.7)) {
          DoorSetting d;
          d.pos = p;
          d.id = coin(rng, 0.8) ? "door_" + std::to_string(door_n++) : "";
          d.state = std::array{DoorState::open, DoorState::closed, DoorState::locked}[static_cast<std::size_t>(pick(rng, 0, 2))];
          s.doors.push_back(d);
        }
      } else {
        put(s, p, random_code(rng, "NS"));
        TextEntry t{random_text(rng), std::nullopt};
        if (s.code_at(p)[1] == 'S' && coin(rng)) t.accuracy = std::uniform_real_distribution<double>(0, 1)(rng);
        s.texts[p] = t;
      }
    }
  }
  std::vector<std::string> ids;
  for (const auto& d : s.doors) {
    if (!d.id.empty()) ids.push_back(d.id);
  }

  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      Position p{c, r};
      const auto& code = s.code_at(p);
      if (code == "##" || code[1] == 'D' || code[1] == 'N' || code[1] == 'S') continue;
      if (!coin(rng, 0.3)) continue;
      const bool at_agent = p == agent;
      if (coin(rng, 0.3)) {
        auto dir = kAllDirections[static_cast<std::size_t>(pick(rng, 0, 3))];
        overlay(s, p, River{dir, pick(rng, 1, 3)});
      }
      if (coin(rng, 0.25)) overlay(s, p, Fire{at_agent ? false : coin(rng, 0.7)});
      if (coin(rng, 0.25)) overlay(s, p, Flood{pick(rng, at_agent ? 1 : 0, 20), false});
      if (!ids.empty() && coin(rng, 0.2)) {
        PressurePlate pl;
        pl.effect = coin(rng) ? PlateEffect::continuous : PlateEffect::trigger;
        pl.link = ids[static_cast<std::size_t>(pick(rng, 0, static_cast<int>(ids.size()) - 1))];
        overlay(s, p, pl);
      }
      if (coin(rng, 0.15)) overlay(s, p, DarkZone{});
    }
  }
  // Overlays are listed in a shuffled order so canonicalization has work to do.
  std::shuffle(s.overlays.begin(), s.overlays.end(), rng);
  std::shuffle(s.doors.begin(), s.doors.end(), rng);

  int sets = pick(rng, 0, 2);
  for (int i = 0; i < sets; ++i) {
    RandomSet rs;
    rs.origin = {pick(rng, 1, w - 2), pick(rng, 1, h - 2)};
    rs.width = pick(rng, 1, w - 1 - rs.origin.col);
    rs.height = pick(rng, 1, h - 1 - rs.origin.row);
    rs.code = random_code(rng, "KBXO");
    rs.count = pick(rng, 0, rs.width * rs.height);
    s.randomized_sets.push_back(rs);
  }
  validate_level(s);
  return s;
}

World random_world(Rng& rng) {
  for (;;) {
    LevelSpec spec = random_level(rng);
    try {
      return World::create(spec, rng());
    } catch (const LevelError&) {
    }
  }
}

Trajectory random_trajectory(Rng& rng) {
  Trajectory t;
  int segs = pick(rng, 1, 3);
  for (int i = 0; i < segs; ++i) {
    Segment s;
    s.level_file = "levels/l" + std::to_string(pick(rng, 0, 999)) + (coin(rng) ? ".txt" : " spaced \xe2\x86\x92.txt");
    s.seed = coin(rng, 0.1) ? std::numeric_limits<std::uint64_t>::max() : rng() >> pick(rng, 0, 63);
    int n = pick(rng, 0, 40);
    for (int k = 0; k < n; ++k) s.actions.push_back(pick(rng, 0, 6));
    t.segments.push_back(std::move(s));
  }
  int probes = pick(rng, 0, 6);
  static const std::vector<std::string> types = {"presence", "count", "state", "location", "causal", "uncertainty",
                                                 "spatial_relation"};
  for (int i = 0; i < probes; ++i) {
    ProbeRecord p;
    p.segment = pick(rng, 0, segs - 1);
    p.step = pick(rng, 0, static_cast<int>(t.segments[static_cast<std::size_t>(p.segment)].actions.size()));
    p.probe_type = types[static_cast<std::size_t>(pick(rng, 0, static_cast<int>(types.size()) - 1))];
    p.question = random_text(rng) + "?";
    p.ground_truth = coin(rng) ? random_text(rng) : std::to_string(pick(rng, 0, 30));
    if (coin(rng)) {
      p.metadata["category"] = std::string(1, "PMCUX"[pick(rng, 0, 4)]);
    }
    if (coin(rng)) {
      p.metadata["query"] = {{"type", "count"},
                             {"filter", {{"kind", "ball"}}},
                             {"scope", "region"},
                             {"region", {{"col", pick(rng, 0, 9)}, {"row", pick(rng, 0, 9)}, {"w", 2}, {"h", 3}}}};
    }
    if (coin(rng, 0.3)) p.metadata["weight"] = std::uniform_real_distribution<double>(-1e6, 1e6)(rng);
    if (coin(rng, 0.3)) p.metadata["tags"] = {random_text(rng), nullptr, true, pick(rng, -5, 5)};
    t.probes.push_back(std::move(p));
  }
  return t;
}

std::vector<bool> reference_visibility(const World& world) {
  const ViewSize v = world.meta().view_size;
  const int half = v.width / 2;
  const Pose pose = world.agent();
  auto world_of = [&](int ahead, int lateral) { return ego_to_world(pose, {ahead, lateral}); };
  auto blocks = [&](int ahead, int lateral) {
    if (ahead == 0 && lateral == 0) return false;
    Position p = world_of(ahead, lateral);
    if (!world.in_bounds(p)) return true;
    const Cell& c = world.cell(p);
    if (c.tiles.dark) return true;
    if (world.meta().see_through_walls || !c.object) return false;
    if (c.object->kind == ObjectKind::wall) return true;
    return c.object->kind == ObjectKind::door && c.object->door_state != DoorState::open;
  };

  const auto n = static_cast<std::size_t>(v.depth * v.width);
  std::vector<bool> lit(n, false);
  auto idx = [&](int a, int l) { return static_cast<std::size_t>(a * v.width + l + half); };
  std::deque<std::pair<int, int>> queue{{0, 0}};
  lit[idx(0, 0)] = true;
  while (!queue.empty()) {
    auto [a, l] = queue.front();
    queue.pop_front();
    if (blocks(a, l)) continue;
    const std::pair<int, int> next[] = {{a, l - 1}, {a, l + 1}, {a + 1, l - 1}, {a + 1, l}, {a + 1, l + 1}};
    for (auto [na, nl] : next) {
      if (na >= v.depth || nl < -half || nl > half) continue;
      if (lit[idx(na, nl)]) continue;
      lit[idx(na, nl)] = true;
      queue.emplace_back(na, nl);
    }
  }
  std::vector<bool> visible(n, false);
  for (int a = 0; a < v.depth; ++a) {
    for (int l = -half; l <= half; ++l) {
      Position p = world_of(a, l);
      if (!lit[idx(a, l)] || !world.in_bounds(p)) continue;
      if (world.cell(p).tiles.dark && !(a == 0 && l == 0)) continue;
      visible[idx(a, l)] = true;
    }
  }
  return visible;
}

EvalRecord record(const std::string& model, const std::string& episode, const std::string& probe, Protocol protocol,
                  Verdict verdict, const std::string& level, SerializerKind serializer, int quintile) {
  EvalRecord r;
  r.run_id = "synthetic";
  r.model_id = model;
  r.trajectory_id = episode;
  r.episode = episode;
  r.probe_id = probe;
  r.probe_type = "presence";
  r.protocol = protocol;
  r.serializer = serializer;
  r.level = level;
  r.verdict = verdict;
  r.quintile = quintile;
  return r;
}

}  // namespace refgrid::testing
