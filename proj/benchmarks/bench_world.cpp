#include <benchmark/benchmark.h>

#include <filesystem>
#include <map>
#include <random>

#include "refgrid/level.hpp"
#include "refgrid/observation.hpp"
#include "refgrid/probe_registry.hpp"
#include "refgrid/serializers.hpp"
#include "refgrid/trajectory.hpp"
#include "refgrid/world.hpp"

using namespace refgrid;

namespace {

std::filesystem::path source(const std::string& rel) { return std::filesystem::path(REFGRID_SOURCE_DIR) / rel; }

const LevelSpec& level(const std::string& name) {
  static std::map<std::string, LevelSpec> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, load_level_file(source("levels/" + name + ".txt").string())).first;
  return it->second;
}

std::vector<Action> script(std::size_t n) {
  std::mt19937_64 rng(7);
  std::vector<Action> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(*action_from_code(static_cast<int>(rng() % 7)));
  return out;
}

}  // namespace

static void BM_Step(benchmark::State& state, const std::string& name) {
  const auto actions = script(256);
  World w = World::create(level(name), 42);
  std::size_t i = 0;
  for (auto _ : state) {
    w.step(actions[i++ % actions.size()]);
    if (i % actions.size() == 0) w = World::create(level(name), 42);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK_CAPTURE(BM_Step, c6, std::string("c6"));
BENCHMARK_CAPTURE(BM_Step, m1_river_field, std::string("m1_river_field"));
BENCHMARK_CAPTURE(BM_Step, p1_dense_array, std::string("p1_dense_array"));

static void BM_Observe(benchmark::State& state) {
  World w = World::create(level("p1_dense_array"), 0);
  for (auto _ : state) benchmark::DoNotOptimize(observe(w));
}
BENCHMARK(BM_Observe);

static void BM_Serialize(benchmark::State& state) {
  World w = World::create(level("m4_unreliable_narrator"), 0);
  std::vector<Observation> history;
  for (Action a : script(static_cast<std::size_t>(state.range(1)))) {
    history.push_back(observe(w));
    w.step(a);
  }
  history.push_back(observe(w));
  const auto kind = static_cast<SerializerKind>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(serialize(kind, history));
}
BENCHMARK(BM_Serialize)
    ->ArgsProduct({{static_cast<int>(SerializerKind::grid), static_cast<int>(SerializerKind::symbolic),
                    static_cast<int>(SerializerKind::memory)},
                   {0, 30}});

static void BM_Replay(benchmark::State& state) {
  auto reg = ProbeRegistry::with_builtins();
  reg.register_type(spatial_relation_probe_type());
  reg.freeze();
  auto t = load_trajectory(source("trajectories/c6_s42.json"), reg);
  for (auto _ : state) {
    int frames = 0;
    replay(t, [&](const ReplayFrame&) { ++frames; });
    benchmark::DoNotOptimize(frames);
  }
}
BENCHMARK(BM_Replay);
BENCHMARK_MAIN();
