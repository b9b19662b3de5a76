#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "refgrid/eval.hpp"
#include "refgrid/level.hpp"
#include "refgrid/observation.hpp"
#include "refgrid/trajectory.hpp"
#include "refgrid/world.hpp"

namespace refgrid::testing {

std::filesystem::path source_dir();
std::filesystem::path fixture(const std::string& relative);
std::string read_file(const std::filesystem::path& p);

/// Every trajectory under trajectories/, sorted by name.
std::vector<std::filesystem::path> fixture_trajectories();
std::vector<std::filesystem::path> fixture_levels();

/// Registry used by the tools: built-ins plus spatial_relation, frozen.
std::shared_ptr<const ProbeRegistry> standard_registry();

using Rng = std::mt19937_64;
int pick(Rng& rng, int lo, int hi);  // inclusive
bool coin(Rng& rng, double p = 0.5);

/// Walled room with the agent at `agent`; everything else floor.
LevelSpec room(int width, int height, Position agent, Direction facing = Direction::north);
void put(LevelSpec& spec, Position p, const std::string& code);
void overlay(LevelSpec& spec, Position p, TileOverlay o);

/// A random spec that passes validate_level, exercising every grammar feature.
LevelSpec random_level(Rng& rng);
/// A world built from random_level, redrawing specs whose random sets cannot be placed.
World random_world(Rng& rng);
/// A random schema-valid trajectory (levels need not exist).
Trajectory random_trajectory(Rng& rng);

/// Visibility recomputed as a graph search: light spreads from the agent cell
/// sideways and one row further ahead (straight or diagonal) out of every lit
/// cell that does not block sight. Independent of observe().
std::vector<bool> reference_visibility(const World& world);

/// Synthetic record with the fields metrics read.
EvalRecord record(const std::string& model, const std::string& episode, const std::string& probe, Protocol protocol,
                  Verdict verdict, const std::string& level = "lvl", SerializerKind serializer = SerializerKind::grid,
                  int quintile = 1);

}  // namespace refgrid::testing
