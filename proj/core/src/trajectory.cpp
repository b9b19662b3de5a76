#include "refgrid/trajectory.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace refgrid {

namespace fs = std::filesystem;

TrajectoryError::TrajectoryError(const std::string& message, std::string where, int line, int column)
    : std::runtime_error([&] {
        if (line > 0) return fmt::format("line {}, column {}: {}", line, column, message);
        if (!where.empty()) return fmt::format("{}: {}", where, message);
        return message;
      }()),
      where_(std::move(where)),
      line_(line),
      column_(column) {}

namespace {

using nlohmann::json;

void require_keys(const json& j, const std::string& where, std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional = {}) {
  if (!j.is_object()) throw TrajectoryError("expected an object", where.empty() ? "/" : where);
  for (const char* k : required) {
    if (!j.contains(k)) throw TrajectoryError(fmt::format("missing key '{}'", k), where.empty() ? "/" : where);
  }
  for (const auto& [k, v] : j.items()) {
    bool known = std::any_of(required.begin(), required.end(), [&](const char* r) { return k == r; }) ||
                 std::any_of(optional.begin(), optional.end(), [&](const char* r) { return k == r; });
    if (!known) throw TrajectoryError(fmt::format("unexpected key '{}'", k), where + "/" + k);
  }
}

int get_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw TrajectoryError("expected an integer", where);
  auto v = j.get<std::int64_t>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw TrajectoryError("integer out of range", where);
  }
  return static_cast<int>(v);
}

std::string get_string(const json& j, const std::string& where) {
  if (!j.is_string()) throw TrajectoryError("expected a string", where);
  return j.get<std::string>();
}

std::pair<int, int> line_column(std::string_view text, std::size_t byte) {
  int line = 1;
  int col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

Trajectory parse_trajectory(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    auto [line, col] = line_column(text, e.byte);
    throw TrajectoryError(fmt::format("malformed JSON ({})", e.what()), {}, line, col);
  }
  require_keys(root, "", {"segments", "probes"});
  Trajectory t;
  const json& segs = root.at("segments");
  if (!segs.is_array()) throw TrajectoryError("expected an array", "/segments");
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const std::string w = fmt::format("/segments/{}", i);
    const json& s = segs[i];
    require_keys(s, w, {"level_file", "seed", "actions"});
    Segment seg;
    seg.level_file = get_string(s.at("level_file"), w + "/level_file");
    if (!s.at("seed").is_number_unsigned() && !(s.at("seed").is_number_integer() && s.at("seed").get<std::int64_t>() >= 0)) {
      throw TrajectoryError("seed must be a non-negative integer", w + "/seed");
    }
    seg.seed = s.at("seed").get<std::uint64_t>();
    const json& acts = s.at("actions");
    if (!acts.is_array()) throw TrajectoryError("expected an array", w + "/actions");
    for (std::size_t k = 0; k < acts.size(); ++k) seg.actions.push_back(get_int(acts[k], fmt::format("{}/actions/{}", w, k)));
    t.segments.push_back(std::move(seg));
  }
  const json& probes = root.at("probes");
  if (!probes.is_array()) throw TrajectoryError("expected an array", "/probes");
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const std::string w = fmt::format("/probes/{}", i);
    const json& p = probes[i];
    require_keys(p, w, {"segment", "step", "probe_type", "question", "ground_truth", "metadata"});
    ProbeRecord r;
    r.segment = get_int(p.at("segment"), w + "/segment");
    r.step = get_int(p.at("step"), w + "/step");
    r.probe_type = get_string(p.at("probe_type"), w + "/probe_type");
    r.question = get_string(p.at("question"), w + "/question");
    r.ground_truth = get_string(p.at("ground_truth"), w + "/ground_truth");
    if (!p.at("metadata").is_object()) throw TrajectoryError("expected an object", w + "/metadata");
    r.metadata = p.at("metadata");
    t.probes.push_back(std::move(r));
  }
  return t;
}

std::string emit_trajectory(const Trajectory& t) {
  json segs = json::array();
  for (const auto& s : t.segments) {
    segs.push_back({{"level_file", s.level_file}, {"seed", s.seed}, {"actions", s.actions}});
  }
  json probes = json::array();
  for (const auto& p : t.probes) {
    probes.push_back({{"segment", p.segment},
                      {"step", p.step},
                      {"probe_type", p.probe_type},
                      {"question", p.question},
                      {"ground_truth", p.ground_truth},
                      {"metadata", p.metadata}});
  }
  json root{{"segments", segs}, {"probes", probes}};
  return root.dump(2) + "\n";
}

Trajectory load_trajectory_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TrajectoryError("cannot open trajectory file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_trajectory(buf.str());
}

void save_trajectory_file(const Trajectory& t, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TrajectoryError("cannot write trajectory file '" + path.string() + "'");
  out << emit_trajectory(t);
}

Category infer_category(const ProbeRecord& p, const std::string& level_file) {
  if (p.metadata.contains("category") && p.metadata.at("category").is_string()) {
    return parse_category(p.metadata.at("category").get<std::string>());
  }
  std::string stem = fs::path(level_file).stem().string();
  if (!stem.empty()) {
    try {
      return parse_category(stem.substr(0, 1));
    } catch (const UnknownName&) {
    }
  }
  return Category::P;
}

Probe make_probe(const ProbeRecord& r, std::size_t index, const std::string& trajectory_id,
                 const std::string& level_file, const ProbeRegistry& registry) {
  const ProbeType* type = registry.find(r.probe_type);
  if (!type) throw ProbeError("unregistered probe type '" + r.probe_type + "'");
  Probe p;
  p.id = r.metadata.contains("id") && r.metadata.at("id").is_string() ? r.metadata.at("id").get<std::string>()
                                                                       : fmt::format("{}-{}", trajectory_id, index);
  try {
    p.category = infer_category(r, level_file);
    if (r.metadata.contains("conflict_policy")) {
      p.policy = parse_conflict_policy(r.metadata.at("conflict_policy").get<std::string>());
    }
  } catch (const UnknownName& e) {
    throw ProbeError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ProbeError(e.what());
  }
  p.answer_type = type->answer_type;
  p.probe_type = r.probe_type;
  p.question = r.question;
  p.segment = r.segment;
  p.step = r.step;
  p.metadata = r.metadata;
  if (type->builtin && r.metadata.contains("query")) {
    p.query = query_from_json(r.metadata.at("query"));
  } else {
    p.literal = r.ground_truth;
    if (type->builtin) parse_literal_truth(r.ground_truth, type->answer_type);
  }
  validate_probe(p);
  return p;
}

LoadedTrajectory resolve_trajectory(const Trajectory& t, const fs::path& base_dir, const ProbeRegistry& registry,
                                    std::string id) {
  LoadedTrajectory out;
  out.id = std::move(id);
  out.raw = t;
  if (t.segments.empty()) throw TrajectoryError("trajectory has no segments", "/segments");
  for (std::size_t i = 0; i < t.segments.size(); ++i) {
    const auto& seg = t.segments[i];
    const std::string w = fmt::format("/segments/{}", i);
    std::vector<fs::path> candidates;
    fs::path lf(seg.level_file);
    if (lf.is_absolute()) {
      candidates.push_back(lf);
    } else {
      candidates.push_back(base_dir / lf);
      candidates.push_back(base_dir.parent_path() / lf);
      candidates.push_back(fs::current_path() / lf);
    }
    auto found = std::find_if(candidates.begin(), candidates.end(), [](const fs::path& p) { return fs::is_regular_file(p); });
    if (found == candidates.end()) {
      throw TrajectoryError(fmt::format("level file '{}' not found", seg.level_file), w + "/level_file");
    }
    try {
      out.levels.push_back(load_level_file(found->string()));
    } catch (const LevelError& e) {
      throw TrajectoryError(fmt::format("level file '{}': {}", seg.level_file, e.what()), w + "/level_file");
    }
    std::vector<Action> acts;
    for (std::size_t k = 0; k < seg.actions.size(); ++k) {
      auto a = action_from_code(seg.actions[k]);
      if (!a) {
        throw TrajectoryError(fmt::format("action code {} outside 0..{}", seg.actions[k], kActionCount - 1),
                              fmt::format("{}/actions/{}", w, k));
      }
      acts.push_back(*a);
    }
    out.actions.push_back(std::move(acts));
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < t.probes.size(); ++i) {
    const auto& r = t.probes[i];
    const std::string w = fmt::format("/probes/{}", i);
    if (r.segment < 0 || r.segment >= static_cast<int>(t.segments.size())) {
      throw TrajectoryError(fmt::format("segment {} does not exist", r.segment), w + "/segment");
    }
    const auto len = static_cast<int>(t.segments[static_cast<std::size_t>(r.segment)].actions.size());
    if (r.step < 0 || r.step > len) {
      throw TrajectoryError(fmt::format("step {} outside 0..{}", r.step, len), w + "/step");
    }
    try {
      out.probes.push_back(
          make_probe(r, i, out.id, t.segments[static_cast<std::size_t>(r.segment)].level_file, registry));
    } catch (const ProbeError& e) {
      throw TrajectoryError(e.what(), w);
    }
    if (!ids.insert(out.probes.back().id).second) {
      throw TrajectoryError(fmt::format("duplicate probe id '{}'", out.probes.back().id), w + "/metadata/id");
    }
  }
  return out;
}

LoadedTrajectory load_trajectory(const fs::path& path, const ProbeRegistry& registry) {
  Trajectory t = load_trajectory_file(path);
  fs::path abs = fs::absolute(path);
  auto loaded = resolve_trajectory(t, abs.parent_path(), registry, path.stem().string());
  loaded.source = abs;
  return loaded;
}

World start_segment(const LoadedTrajectory& t, std::size_t index, const std::optional<WorldObject>& carried) {
  World w = World::create(t.levels.at(index), t.raw.segments.at(index).seed);
  w.set_inventory(carried);
  return w;
}

void replay(const LoadedTrajectory& t, const ReplaySink& sink) {
  std::vector<Observation> history;
  std::optional<WorldObject> carried;
  for (std::size_t s = 0; s < t.levels.size(); ++s) {
    World w = start_segment(t, s, carried);
    const std::size_t begin = history.size();
    const auto& acts = t.actions[s];
    for (std::size_t k = 0; k <= acts.size(); ++k) {
      if (k > 0) w.step(acts[k - 1]);
      history.push_back(observe(w, static_cast<int>(s)));
      ReplayFrame frame{static_cast<int>(s), static_cast<int>(k), w, history.back(), history, begin, {}};
      for (const auto& p : t.probes) {
        if (p.segment == static_cast<int>(s) && p.step == static_cast<int>(k)) frame.due.push_back(&p);
      }
      sink(frame);
    }
    carried = w.inventory();
  }
}

ResolvedTruth resolve_truth(const Probe& p, const ProbeRegistry& registry, const World& world,
                            const std::vector<Observation>& segment_history, const std::vector<Action>& actions) {
  const ProbeType& type = registry.at(p.probe_type);
  ResolvedTruth r;
  if (p.query) {
    r.truth = compute_ground_truth(*p.query, world, segment_history);
    r.rendered = render_truth(r.truth, p.answer_type);
    r.computed = true;
  } else if (!type.builtin && p.metadata.contains("params")) {
    ProbeContext ctx{world, segment_history, actions, world.step_count(), p.metadata.at("params")};
    r.rendered = type.generate(ctx).ground_truth;
    r.truth = r.rendered;
    r.computed = true;
  } else if (type.builtin) {
    r.truth = parse_literal_truth(*p.literal, p.answer_type);
    r.rendered = *p.literal;
  } else {
    r.truth = *p.literal;
    r.rendered = *p.literal;
  }
  return r;
}

namespace {

template <typename Fn>
void for_each_computed(const LoadedTrajectory& t, const ProbeRegistry& registry, Fn&& fn) {
  replay(t, [&](const ReplayFrame& f) {
    if (f.due.empty()) return;
    std::vector<Observation> seg(f.history.begin() + static_cast<std::ptrdiff_t>(f.segment_begin), f.history.end());
    for (const Probe* p : f.due) {
      auto r = resolve_truth(*p, registry, f.world, seg, t.actions[static_cast<std::size_t>(f.segment)]);
      if (r.computed) fn(static_cast<std::size_t>(p - t.probes.data()), r);
    }
  });
}

}  // namespace

std::vector<TruthMismatch> check_recorded_truths(const LoadedTrajectory& t, const ProbeRegistry& registry) {
  std::vector<TruthMismatch> out;
  for_each_computed(t, registry, [&](std::size_t i, const ResolvedTruth& r) {
    if (t.raw.probes[i].ground_truth != r.rendered) out.push_back({i, t.raw.probes[i].ground_truth, r.rendered});
  });
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.probe_index < b.probe_index; });
  return out;
}

Trajectory refresh_truths(const LoadedTrajectory& t, const ProbeRegistry& registry) {
  Trajectory out = t.raw;
  for_each_computed(t, registry, [&](std::size_t i, const ResolvedTruth& r) { out.probes[i].ground_truth = r.rendered; });
  return out;
}

// ---- recording --------------------------------------------------------------

RecordSession::RecordSession(LevelSpec level, std::string level_file, std::uint64_t seed,
                             std::shared_ptr<const ProbeRegistry> registry)
    : registry_(registry ? std::move(registry) : std::make_shared<const ProbeRegistry>(ProbeRegistry::with_builtins())) {
  segments_.push_back(Seg{std::move(level), std::move(level_file), seed, {}, std::nullopt, 0});
  rebuild_current();
}

void RecordSession::rebuild_current() {
  Seg& seg = segments_.back();
  world_ = World::create(seg.level, seg.seed);
  world_.set_inventory(seg.carried_in);
  observations_.resize(seg.obs_begin);
  observations_.push_back(observe(world_, segment()));
  for (Action a : seg.actions) {
    world_.step(a);
    observations_.push_back(observe(world_, segment()));
  }
}

std::vector<Observation> RecordSession::segment_observations() const {
  return {observations_.begin() + static_cast<std::ptrdiff_t>(segments_.back().obs_begin), observations_.end()};
}

void RecordSession::append(Action a) {
  segments_.back().actions.push_back(a);
  world_.step(a);
  observations_.push_back(observe(world_, segment()));
}

bool RecordSession::undo() {
  Seg& seg = segments_.back();
  if (seg.actions.empty()) return false;
  seg.actions.pop_back();
  rebuild_current();
  const int seg_index = segment();
  const int now = step();
  std::erase_if(probes_, [&](const ProbeRecord& p) { return p.segment == seg_index && p.step > now; });
  return true;
}

const ProbeRecord& RecordSession::plant(std::string probe_type, std::string question, std::string ground_truth,
                                        nlohmann::json metadata) {
  if (!metadata.is_object()) throw ProbeError("probe metadata must be an object");
  ProbeRecord rec{segment(), step(), std::move(probe_type), std::move(question), std::move(ground_truth),
                  std::move(metadata)};
  const Seg& seg = segments_.back();
  const ProbeType& type = registry_->at(rec.probe_type);
  bool computed = (type.builtin && rec.metadata.contains("query")) || (!type.builtin && rec.metadata.contains("params"));
  if (computed) {
    // Type-check first with a placeholder so the literal path does not reject an empty answer.
    ProbeRecord probe_view = rec;
    if (probe_view.ground_truth.empty()) probe_view.ground_truth = "placeholder";
    Probe p = make_probe(probe_view, probes_.size(), "session", seg.level_file, *registry_);
    auto hist = segment_observations();
    auto r = resolve_truth(p, *registry_, world_, hist, seg.actions);
    if (rec.ground_truth.empty()) {
      rec.ground_truth = r.rendered;
    } else if (normalize_answer(rec.ground_truth) != normalize_answer(r.rendered)) {
      throw ProbeError(fmt::format("recorded ground truth '{}' disagrees with the computed '{}'", rec.ground_truth,
                                   r.rendered));
    }
    if (rec.question.empty()) {
      ProbeContext ctx{world_, hist, seg.actions, step(), type.builtin ? rec.metadata : rec.metadata.at("params")};
      rec.question = type.generate(ctx).question;
    }
  } else {
    if (rec.ground_truth.empty()) throw ProbeError("a recorded ground truth is required");
    make_probe(rec, probes_.size(), "session", seg.level_file, *registry_);
  }
  if (rec.question.empty()) throw ProbeError("a question is required");
  probes_.push_back(std::move(rec));
  return probes_.back();
}

void RecordSession::next_segment(LevelSpec level, std::string level_file, std::uint64_t seed) {
  auto carried = world_.inventory();
  segments_.push_back(Seg{std::move(level), std::move(level_file), seed, {}, carried, observations_.size()});
  rebuild_current();
}

Trajectory RecordSession::finalize() const {
  Trajectory t;
  for (const auto& s : segments_) {
    Segment out{s.level_file, s.seed, {}};
    for (Action a : s.actions) out.actions.push_back(action_code(a));
    t.segments.push_back(std::move(out));
  }
  t.probes = probes_;
  std::stable_sort(t.probes.begin(), t.probes.end(), [](const ProbeRecord& a, const ProbeRecord& b) {
    return std::pair(a.segment, a.step) < std::pair(b.segment, b.step);
  });
  return t;
}

}  // namespace refgrid
