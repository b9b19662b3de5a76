#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "refgrid/level.hpp"
#include "refgrid/observation.hpp"
#include "refgrid/probe.hpp"
#include "refgrid/probe_registry.hpp"
#include "refgrid/world.hpp"

namespace refgrid {

struct Segment {
  std::string level_file;
  std::uint64_t seed = 0;
  std::vector<int> actions;  // raw codes; range-checked by resolve_trajectory
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct ProbeRecord {
  int segment = 0;
  int step = 0;
  std::string probe_type;
  std::string question;
  std::string ground_truth;
  nlohmann::json metadata = nlohmann::json::object();
  friend bool operator==(const ProbeRecord&, const ProbeRecord&) = default;
};

/// On-disk trajectory: exactly the two top-level keys `segments` and `probes`.
struct Trajectory {
  std::vector<Segment> segments;
  std::vector<ProbeRecord> probes;
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// `where` is a JSON pointer for schema errors; line/column are set for
/// malformed JSON text.
class TrajectoryError : public std::runtime_error {
 public:
  TrajectoryError(const std::string& message, std::string where = {}, int line = 0, int column = 0);
  const std::string& where() const { return where_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string where_;
  int line_;
  int column_;
};

Trajectory parse_trajectory(std::string_view text);
/// Canonical encoding: sorted keys, two-space indent, trailing newline.
std::string emit_trajectory(const Trajectory& t);
Trajectory load_trajectory_file(const std::filesystem::path& path);
void save_trajectory_file(const Trajectory& t, const std::filesystem::path& path);

/// A trajectory with its levels loaded, actions decoded and probes typed.
struct LoadedTrajectory {
  std::string id;
  std::filesystem::path source;
  Trajectory raw;
  std::vector<LevelSpec> levels;
  std::vector<std::vector<Action>> actions;
  std::vector<Probe> probes;  // index-aligned with raw.probes
};

/// Level paths are tried relative to `base_dir`, then its parent, then the
/// working directory. Throws TrajectoryError naming the offending element.
LoadedTrajectory resolve_trajectory(const Trajectory& t, const std::filesystem::path& base_dir,
                                    const ProbeRegistry& registry, std::string id = "trajectory");
LoadedTrajectory load_trajectory(const std::filesystem::path& path, const ProbeRegistry& registry);

/// Types one record. `index` feeds the generated id when metadata.id is absent.
Probe make_probe(const ProbeRecord& record, std::size_t index, const std::string& trajectory_id,
                 const std::string& level_file, const ProbeRegistry& registry);

/// Category from metadata.category, else from the first letter of the level file name.
Category infer_category(const ProbeRecord& p, const std::string& level_file);

/// Starts segment `index`: fresh world from its level and seed, carrying the
/// previous segment's inventory.
World start_segment(const LoadedTrajectory& t, std::size_t index, const std::optional<WorldObject>& carried);

struct ReplayFrame {
  int segment = 0;
  int step = 0;
  const World& world;
  const Observation& observation;
  /// Observations of all segments so far, in order; the last one is `observation`.
  const std::vector<Observation>& history;
  /// Start of the current segment within `history`.
  std::size_t segment_begin = 0;
  std::vector<const Probe*> due;
};

using ReplaySink = std::function<void(const ReplayFrame&)>;

/// Deterministically re-runs every segment, calling `sink` after the initial
/// state and after every action.
void replay(const LoadedTrajectory& t, const ReplaySink& sink);

struct ResolvedTruth {
  GroundTruth truth;
  std::string rendered;
  bool computed = false;
};

/// Ground truth of `p` at the current frame: recomputed for probes carrying a
/// query or plugin parameters, otherwise the recorded answer.
ResolvedTruth resolve_truth(const Probe& p, const ProbeRegistry& registry, const World& world,
                            const std::vector<Observation>& segment_history, const std::vector<Action>& actions);

struct TruthMismatch {
  std::size_t probe_index = 0;
  std::string recorded;
  std::string computed;
};

/// Replays and compares recorded ground truths of computed probes.
std::vector<TruthMismatch> check_recorded_truths(const LoadedTrajectory& t, const ProbeRegistry& registry);
/// Copy of `t.raw` with computed ground truths written back.
Trajectory refresh_truths(const LoadedTrajectory& t, const ProbeRegistry& registry);

/// Live recording: append actions, undo within the current segment, plant
/// probes, move to the next room, and finalize into a Trajectory.
class RecordSession {
 public:
  RecordSession(LevelSpec level, std::string level_file, std::uint64_t seed,
                std::shared_ptr<const ProbeRegistry> registry = nullptr);

  const World& world() const { return world_; }
  int segment() const { return static_cast<int>(segments_.size()) - 1; }
  int step() const { return world_.step_count(); }
  /// Observations across all segments.
  const std::vector<Observation>& observations() const { return observations_; }
  std::vector<Observation> segment_observations() const;

  void append(Action a);
  /// Removes the last action of the current segment. Returns false (no-op)
  /// when the segment has no actions. Probes planted after the new step go too.
  bool undo();
  /// Plants at the current (segment, step). Computed probes (metadata.query or
  /// plugin parameters) get their ground truth filled in. Returns the record.
  const ProbeRecord& plant(std::string probe_type, std::string question, std::string ground_truth,
                           nlohmann::json metadata = nlohmann::json::object());
  void next_segment(LevelSpec level, std::string level_file, std::uint64_t seed);
  Trajectory finalize() const;

 private:
  struct Seg {
    LevelSpec level;
    std::string level_file;
    std::uint64_t seed = 0;
    std::vector<Action> actions;
    std::optional<WorldObject> carried_in;
    std::size_t obs_begin = 0;
  };
  void rebuild_current();

  std::shared_ptr<const ProbeRegistry> registry_;
  std::vector<Seg> segments_;
  std::vector<ProbeRecord> probes_;
  World world_;
  std::vector<Observation> observations_;
};

}  // namespace refgrid
