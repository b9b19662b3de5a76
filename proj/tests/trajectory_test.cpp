#include <gtest/gtest.h>

#include "refgrid/trajectory.hpp"
#include "suites.hpp"
#include "support.hpp"

using namespace refgrid;
using namespace refgrid::testing;

namespace {

bool fire_row_burning(const World& w) {
  for (int c = 1; c <= 6; ++c) {
    if (!w.cell({c, 6}).tiles.burning()) return false;
  }
  return true;
}

}  // namespace

TEST(Trajectory, SampleFileLoadsAndProbeFiresAfterTwelveActions) {
  auto reg = standard_registry();
  Trajectory raw = parse_trajectory(read_file(fixture("tests/golden/sample_trajectory.json")));
  ASSERT_EQ(raw.segments.size(), 1u);
  EXPECT_EQ(raw.segments[0].seed, 42u);
  EXPECT_EQ(raw.segments[0].actions.size(), 30u);
  ASSERT_EQ(raw.probes.size(), 1u);
  EXPECT_TRUE(raw.probes[0].metadata.empty());

  LoadedTrajectory t = resolve_trajectory(raw, source_dir(), *reg, "sample");
  ASSERT_EQ(t.probes.size(), 1u);
  EXPECT_EQ(t.probes[0].category, Category::C);
  EXPECT_TRUE(t.probes[0].literal);

  int due_at = -1;
  int frames = 0;
  replay(t, [&](const ReplayFrame& f) {
    ++frames;
    EXPECT_EQ(f.world.step_count(), f.step);
    if (f.due.empty()) return;
    due_at = f.step;
    // independent check on the world: every fire cell on row 6 still burns
    EXPECT_TRUE(fire_row_burning(f.world));
    for (int c = 1; c <= 6; ++c) EXPECT_FALSE(f.world.passable({c, 6}));
    auto truth = resolve_truth(*f.due[0], *reg, f.world, f.history, t.actions[0]);
    EXPECT_FALSE(truth.computed);
    EXPECT_EQ(truth.rendered, "false");
  });
  EXPECT_EQ(due_at, 12);
  EXPECT_EQ(frames, 31);
}

TEST(Trajectory, FloodPutsOutFireLineInC6) {
  auto reg = standard_registry();
  LoadedTrajectory t = load_trajectory(fixture("trajectories/c6_s42.json"), *reg);
  std::vector<bool> burning;
  replay(t, [&](const ReplayFrame& f) { burning.push_back(fire_row_burning(f.world)); });
  ASSERT_EQ(burning.size(), 31u);
  for (int s = 0; s < 14; ++s) EXPECT_TRUE(burning[static_cast<std::size_t>(s)]) << s;
  for (int s = 14; s <= 30; ++s) {
    // the wet row 5 reaches the fire at step 14
    EXPECT_FALSE(burning[static_cast<std::size_t>(s)]) << s;
  }
}

TEST(Trajectory, EveryFixtureReplaysWithMatchingTruths) {
  auto reg = standard_registry();
  auto files = fixture_trajectories();
  ASSERT_GE(files.size(), 10u);
  for (const auto& p : files) {
    LoadedTrajectory t = load_trajectory(p, *reg);
    EXPECT_FALSE(t.probes.empty()) << p;
    auto mismatches = check_recorded_truths(t, *reg);
    for (const auto& m : mismatches) {
      ADD_FAILURE() << p << " probe " << m.probe_index << ": recorded " << m.recorded << ", computed " << m.computed;
    }
    EXPECT_EQ(refresh_truths(t, *reg), t.raw) << p;
  }
}

TEST(Trajectory, ReplayIsDeterministic) {
  auto reg = standard_registry();
  for (const auto& p : fixture_trajectories()) {
    LoadedTrajectory t = load_trajectory(p, *reg);
    std::vector<std::string> a, b;
    replay(t, [&](const ReplayFrame& f) { a.push_back(f.world.fingerprint()); });
    replay(t, [&](const ReplayFrame& f) { b.push_back(f.world.fingerprint()); });
    EXPECT_EQ(a, b) << p;
  }
}

TEST(Trajectory, SegmentsCarryInventory) {
  auto reg = standard_registry();
  LoadedTrajectory t = load_trajectory(fixture("trajectories/x1_zones.json"), *reg);
  ASSERT_EQ(t.levels.size(), 2u);
  std::optional<WorldObject> end_of_first;
  int last_segment = -1;
  std::size_t second_begin = 0;
  replay(t, [&](const ReplayFrame& f) {
    if (f.segment == 0) end_of_first = f.world.inventory();
    if (f.segment == 1 && last_segment == 0) {
      second_begin = f.segment_begin;
      EXPECT_EQ(f.step, 0);
      EXPECT_EQ(f.world.inventory().has_value(), end_of_first.has_value());
    }
    last_segment = f.segment;
  });
  EXPECT_EQ(last_segment, 1);
  EXPECT_EQ(second_begin, t.actions[0].size() + 1);
  ASSERT_TRUE(end_of_first);
  EXPECT_EQ(end_of_first->kind, ObjectKind::key);
}

TEST(Trajectory, CanonicalRoundTrip) {
  auto r = trajectory_roundtrip_suite(200, 77);
  EXPECT_EQ(r.cases, 200);
  EXPECT_TRUE(r.failures.empty()) << r.summary();
  for (const auto& p : fixture_trajectories()) {
    Trajectory t = load_trajectory_file(p);
    EXPECT_EQ(parse_trajectory(emit_trajectory(t)), t) << p;
  }
}

TEST(Trajectory, MalformedCorpusGivesLocatedErrors) {
  auto r = trajectory_corpus_suite();
  EXPECT_GE(r.cases, 20);
  EXPECT_TRUE(r.failures.empty()) << r.summary(50);
}

TEST(Trajectory, SchemaErrorsNameTheElement) {
  try {
    parse_trajectory(R"({"segments": [{"level_file": "x", "seed": 1, "actions": [1, "two"]}], "probes": []})");
    FAIL();
  } catch (const TrajectoryError& e) {
    EXPECT_EQ(e.where(), "/segments/0/actions/1");
  }
  try {
    parse_trajectory("{\n  \"segments\": [,]\n}");
    FAIL();
  } catch (const TrajectoryError& e) {
    EXPECT_EQ(e.line(), 2);
  }
  EXPECT_THROW(parse_trajectory(R"({"segments": [], "probes": [], "extra": 1})"), TrajectoryError);
}

TEST(Trajectory, CategoryInference) {
  ProbeRecord p;
  EXPECT_EQ(infer_category(p, "levels/m1_river_field.txt"), Category::M);
  EXPECT_EQ(infer_category(p, "u2.txt"), Category::U);
  p.metadata["category"] = "X";
  EXPECT_EQ(infer_category(p, "levels/m1_river_field.txt"), Category::X);
}

TEST(RecordSession, AppendUndoPlantFinalize) {
  auto reg = standard_registry();
  auto spec = load_level_file(fixture("levels/p1_dense_array.txt").string());
  RecordSession rec(spec, "levels/p1_dense_array.txt", 0, reg);
  EXPECT_FALSE(rec.undo());
  rec.append(Action::wait);
  rec.append(Action::turn_left);
  EXPECT_EQ(rec.step(), 2);
  rec.plant("presence", "Is there a yellow key?", "no");
  EXPECT_TRUE(rec.undo());
  EXPECT_EQ(rec.step(), 1);
  EXPECT_EQ(rec.world().agent().facing, Direction::north);
  rec.append(Action::wait);
  const auto& planted = rec.plant("count", "How many blue balls?", "",
                                  {{"query", {{"type", "count"}, {"filter", {{"kind", "ball"}, {"color", "blue"}}}}}});
  EXPECT_EQ(planted.ground_truth, "14");
  EXPECT_EQ(rec.observations().size(), 3u);

  Trajectory t = rec.finalize();
  ASSERT_EQ(t.segments.size(), 1u);
  EXPECT_EQ(t.segments[0].actions, (std::vector<int>{6, 6}));
  ASSERT_EQ(t.probes.size(), 1u);
  EXPECT_EQ(t.probes[0].step, 2);

  LoadedTrajectory back = resolve_trajectory(t, source_dir(), *reg, "recorded");
  EXPECT_TRUE(check_recorded_truths(back, *reg).empty());
}

TEST(RecordSession, NextSegmentCarriesInventoryAndReplaysIdentically) {
  auto reg = standard_registry();
  auto a = load_level_file(fixture("levels/x1_zone_a.txt").string());
  auto b = load_level_file(fixture("levels/x1_zone_b.txt").string());
  RecordSession rec(a, "levels/x1_zone_a.txt", 0, reg);
  for (int code : {1, 2, 2, 0, 2, 2, 3, 6}) rec.append(*action_from_code(code));
  ASSERT_TRUE(rec.world().inventory());
  rec.next_segment(b, "levels/x1_zone_b.txt", 0);
  EXPECT_EQ(rec.segment(), 1);
  EXPECT_EQ(rec.step(), 0);
  ASSERT_TRUE(rec.world().inventory());
  EXPECT_FALSE(rec.undo());
  for (int code : {2, 5}) rec.append(*action_from_code(code));
  EXPECT_EQ(rec.segment_observations().size(), 3u);
  const auto final_print = rec.world().fingerprint();

  Trajectory t = rec.finalize();
  LoadedTrajectory loaded = resolve_trajectory(t, source_dir(), *reg, "rec");
  std::string replayed;
  replay(loaded, [&](const ReplayFrame& f) { replayed = f.world.fingerprint(); });
  EXPECT_EQ(replayed, final_print);
}

TEST(Trajectory, FileIo) {
  auto reg = standard_registry();
  Trajectory t = load_trajectory_file(fixture("trajectories/m1_river_field.json"));
  auto tmp = std::filesystem::temp_directory_path() / "refgrid_traj_io.json";
  save_trajectory_file(t, tmp);
  EXPECT_EQ(load_trajectory_file(tmp), t);
  EXPECT_EQ(read_file(tmp), emit_trajectory(t));
  std::filesystem::remove(tmp);
  EXPECT_THROW(load_trajectory_file("/nonexistent/x.json"), TrajectoryError);
  Trajectory bad = t;
  bad.segments[0].level_file = "levels/missing.txt";
  EXPECT_THROW(resolve_trajectory(bad, source_dir(), *reg), TrajectoryError);
  bad = t;
  bad.segments[0].actions.push_back(9);
  EXPECT_THROW(resolve_trajectory(bad, source_dir(), *reg), TrajectoryError);
}
