#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "refgrid/eval.hpp"

namespace refgrid::testing {

struct SuiteResult {
  int cases = 0;
  std::vector<std::string> failures;
  bool ok() const { return failures.empty() && cases > 0; }
  void fail(std::string what) { failures.push_back(std::move(what)); }
  /// First few failures, one per line.
  std::string summary(std::size_t max = 5) const;
};

// Mechanics: each suite builds `worlds` randomized small rooms and recomputes
// the expected state step by step without consulting World internals.
SuiteResult river_suite(int worlds, std::uint64_t seed);
SuiteResult flood_suite(int worlds, std::uint64_t seed);
SuiteResult wetness_suite(int worlds, std::uint64_t seed);
SuiteResult plate_suite(int worlds, std::uint64_t seed);
SuiteResult flood_fire_suite(int worlds, std::uint64_t seed);
SuiteResult visibility_suite(int worlds, std::uint64_t seed);

/// `triples` random (fixture level, seed, `actions`-action script) replays, run
/// twice, compared on the per-step grid serialization.
SuiteResult determinism_suite(int triples, int actions, std::uint64_t seed);

SuiteResult level_roundtrip_suite(int specs, std::uint64_t seed);
SuiteResult trajectory_roundtrip_suite(int trajectories, std::uint64_t seed);
/// Every file under tests/corpus/levels must fail with a positioned LevelError.
SuiteResult level_corpus_suite();
/// Every file under tests/corpus/trajectories must fail with a positioned TrajectoryError.
SuiteResult trajectory_corpus_suite();

/// All fixture trajectories x both protocols x all serializers.
std::vector<EvalRecord> run_all_fixtures(ModelAdapter& adapter);

}  // namespace refgrid::testing
