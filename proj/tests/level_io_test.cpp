#include <gtest/gtest.h>

#include "refgrid/level.hpp"
#include "refgrid/world.hpp"
#include "suites.hpp"
#include "support.hpp"

using namespace refgrid;
using namespace refgrid::testing;

namespace {

const char* kSmall = R"(# a comment line
[META]
id=small
agent_start=2,2
agent_dir=east
view_size=5x3
see_through_walls=false
max_steps=50
soak_duration=2

[GRID]
## ## ## ## ## ##
## rD .. .. bS ##
## .. @. .. .. ##
## eN .. .. gK ##
## ## ## ## ## ##

[OVERLAYS]
river 3 2 dir=south speed=2
fire 2 1 active=false
flood 3 3 rise_step=4
plate 1 2 effect=continuous link=front
dark 4 2
door 1 1 id=front state=locked
random 2 3 code=yB count=1 h=1 w=2

[TEXTS]
4 1 accuracy=0.25 "Keys open \"doors\"."
1 3 "Notice"
)";

}  // namespace

TEST(LevelIo, ParsesEveryGrammarFeature) {
  LevelSpec s = parse_level(kSmall);
  EXPECT_EQ(s.meta.id, "small");
  EXPECT_EQ(s.meta.agent_dir, Direction::east);
  EXPECT_EQ(s.meta.view_size, (ViewSize{5, 3}));
  EXPECT_EQ(s.meta.soak_duration, 2);
  EXPECT_EQ(s.width, 6);
  EXPECT_EQ(s.height, 5);
  EXPECT_EQ(s.code_at({1, 1}), "rD");
  ASSERT_EQ(s.overlays.size(), 5u);
  ASSERT_EQ(s.doors.size(), 1u);
  EXPECT_EQ(s.doors[0].id, "front");
  EXPECT_EQ(s.doors[0].state, DoorState::locked);
  ASSERT_EQ(s.randomized_sets.size(), 1u);
  EXPECT_EQ(s.randomized_sets[0].count, 1);
  EXPECT_EQ(s.texts.at({4, 1}).text, "Keys open \"doors\".");
  EXPECT_DOUBLE_EQ(*s.texts.at({4, 1}).accuracy, 0.25);
  EXPECT_FALSE(s.texts.at({1, 3}).accuracy);
  World w = World::create(s, 1);
  EXPECT_EQ(w.cell({1, 1}).object->door_state, DoorState::locked);
}

TEST(LevelIo, ViewSizeSingleNumberMeansSquare) {
  std::string text = kSmall;
  text.replace(text.find("view_size=5x3"), 13, "view_size=7");
  EXPECT_EQ(parse_level(text).meta.view_size, (ViewSize{7, 7}));
}

TEST(LevelIo, AgentDirRandom) {
  std::string text = kSmall;
  text.replace(text.find("agent_dir=east"), 14, "agent_dir=random");
  LevelSpec s = parse_level(text);
  EXPECT_FALSE(s.meta.agent_dir);
  EXPECT_NE(emit_level(s).find("agent_dir=random"), std::string::npos);
}

TEST(LevelIo, EmitIsCanonicalAndParsesBack) {
  LevelSpec s = parse_level(kSmall);
  std::string once = emit_level(s);
  EXPECT_EQ(parse_level(once), s);
  EXPECT_EQ(emit_level(parse_level(once)), once);
}

TEST(LevelIo, RoundTripOverRandomSpecs) {
  auto r = level_roundtrip_suite(200, 2024);
  EXPECT_EQ(r.cases, 200);
  EXPECT_TRUE(r.failures.empty()) << r.summary();
}

TEST(LevelIo, EveryFixtureValidatesAndRoundTrips) {
  auto levels = fixture_levels();
  ASSERT_GE(levels.size(), 10u);
  for (const auto& p : levels) {
    LevelSpec s = load_level_file(p.string());
    EXPECT_EQ(parse_level(emit_level(s)), s) << p;
    EXPECT_NO_THROW(World::create(s, 0)) << p;
  }
}

TEST(LevelIo, MalformedCorpusGivesPositionedErrors) {
  auto r = level_corpus_suite();
  EXPECT_GE(r.cases, 30);
  EXPECT_TRUE(r.failures.empty()) << r.summary(50);
}

TEST(LevelIo, ErrorPointsAtOffendingCell) {
  std::string text = kSmall;
  text.replace(text.find("## .. @. .. .. ##"), 17, "## .. @. zz .. ##");
  try {
    parse_level(text);
    FAIL();
  } catch (const LevelError& e) {
    EXPECT_EQ(e.code(), LevelErrorCode::unknown_code);
    EXPECT_EQ(e.line(), 14);
    EXPECT_EQ(e.column(), 10);
    ASSERT_TRUE(e.cell());
    EXPECT_EQ(*e.cell(), (Position{3, 2}));
    EXPECT_NE(std::string(e.what()).find("line 14"), std::string::npos);
  }
}

TEST(LevelIo, ErrorPointsAtOverlayLine) {
  std::string text = kSmall;
  text.replace(text.find("dark 4 2"), 8, "dark 4 9");
  try {
    parse_level(text);
    FAIL();
  } catch (const LevelError& e) {
    EXPECT_EQ(e.code(), LevelErrorCode::out_of_bounds);
    EXPECT_EQ(e.line(), 23);
  }
}

TEST(LevelIo, ValidateCatchesProgrammaticSpecs) {
  LevelSpec s = room(5, 5, {2, 2});
  put(s, {0, 2}, "..");
  EXPECT_THROW(validate_level(s), LevelError);
  s = room(5, 5, {2, 2});
  overlay(s, {1, 1}, PressurePlate{PlateEffect::trigger, "ghost", false});
  try {
    validate_level(s);
    FAIL();
  } catch (const LevelError& e) {
    EXPECT_EQ(e.code(), LevelErrorCode::dangling_link);
    EXPECT_EQ(e.line(), 0);
    EXPECT_EQ(*e.cell(), (Position{1, 1}));
  }
}

TEST(LevelIo, ObjectCodes) {
  EXPECT_TRUE(is_known_cell_code("bB"));
  EXPECT_TRUE(is_known_cell_code("##"));
  EXPECT_TRUE(is_known_cell_code("@."));
  EXPECT_FALSE(is_known_cell_code("zB"));
  EXPECT_FALSE(is_known_cell_code("b"));
  auto o = object_from_code("pX");
  ASSERT_TRUE(o);
  EXPECT_EQ(o->kind, ObjectKind::box);
  EXPECT_EQ(o->color, Color::purple);
  EXPECT_FALSE(object_from_code(".."));
}
