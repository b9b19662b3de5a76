#include <gtest/gtest.h>

#include <atomic>
#include <sstream>
#include <thread>

#include "refgrid/eval.hpp"
#include "suites.hpp"
#include "support.hpp"

using namespace refgrid;
using namespace refgrid::testing;

namespace {

LoadedTrajectory load(const std::string& name) {
  return load_trajectory(fixture("trajectories/" + name + ".json"), *standard_registry());
}

RunOptions fast(SerializerKind s = SerializerKind::grid) {
  RunOptions o;
  o.serializer = s;
  o.retry.initial_backoff = std::chrono::milliseconds(1);
  return o;
}

}  // namespace

TEST(Eval, OracleNeverHallucinates) {
  OracleAdapter oracle;
  auto records = run_all_fixtures(oracle);
  ASSERT_FALSE(records.empty());
  for (const auto& r : records) {
    EXPECT_EQ(r.verdict, Verdict::correct) << r.trajectory_id << " " << r.probe_id << " " << to_string(r.protocol)
                                           << " " << to_string(r.serializer) << ": " << r.model_output << " vs "
                                           << r.ground_truth;
  }
}

TEST(Eval, StaleMemoryHallucinatesOnlyWhereStateMoves) {
  StaleMemoryAdapter stale(3);
  auto records = run_all_fixtures(stale);
  std::map<Category, std::pair<int, int>> tally;  // hallucinated, graded
  for (const auto& r : records) {
    ASSERT_NE(r.verdict, Verdict::transport_failure) << r.reason;
    ASSERT_NE(r.verdict, Verdict::unparseable) << r.model_output;
    tally[r.category].first += r.verdict == Verdict::hallucinated;
    tally[r.category].second += 1;
  }
  EXPECT_EQ(tally[Category::P].first, 0);
  EXPECT_GT(tally[Category::P].second, 0);
  EXPECT_GT(tally[Category::M].first, 0);
}

TEST(Eval, FixedZeroIsWrongOnEveryNonzeroCount) {
  auto zero = ScriptedAdapter::fixed("ANSWER: 0");
  auto reg = standard_registry();
  int counts = 0;
  for (const auto& p : fixture_trajectories()) {
    auto t = load_trajectory(p, *reg);
    auto records = run_ctrl_static(t, *zero, *reg, fast());
    ASSERT_EQ(records.size(), t.probes.size()) << p;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      EXPECT_EQ(r.probe_id, t.probes[i].id);
      if (t.probes[i].answer_type != AnswerType::count) continue;
      ++counts;
      EXPECT_EQ(r.verdict, r.ground_truth == "0" ? Verdict::correct : Verdict::hallucinated) << r.ground_truth;
    }
  }
  EXPECT_GE(counts, 5);
}

TEST(Eval, BothProtocolsYieldPairedProbeSets) {
  OracleAdapter oracle;
  auto reg = standard_registry();
  for (const auto& p : fixture_trajectories()) {
    auto t = load_trajectory(p, *reg);
    auto a = run_ctrl_static(t, oracle, *reg, fast());
    auto b = run_in_nav(t, oracle, *reg, fast());
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].probe_id, b[i].probe_id);
      EXPECT_EQ(a[i].ground_truth, b[i].ground_truth);
      EXPECT_EQ(a[i].protocol, Protocol::ctrl_static);
      EXPECT_EQ(b[i].protocol, Protocol::in_nav);
    }
  }
}

TEST(Eval, InNavProbeAtStepZeroSeesOnlyInitialObservation) {
  auto t = load("p1_dense_array");
  std::vector<std::vector<ChatMessage>> seen;
  ScriptedAdapter spy("spy", [&](const AdapterRequest& r) {
    seen.push_back(r.messages);
    return std::string("ANSWER: yes");
  });
  run_in_nav(t, spy, *standard_registry(), fast());
  ASSERT_FALSE(seen.empty());
  const auto& first = seen[0];
  ASSERT_EQ(first.size(), 3u);
  EXPECT_EQ(first[0].role, "system");
  EXPECT_EQ(first[1].role, "user");
  EXPECT_TRUE(first[1].content.starts_with("Observation:\nStep 0 |"));
  EXPECT_EQ(first[2].role, "user");
  EXPECT_TRUE(first[2].content.starts_with("Question: "));
  // later probes see earlier answers and every action turn
  const auto& last = seen.back();
  int actions = 0, answers = 0;
  for (const auto& m : last) {
    actions += m.content.starts_with("ACTION: ");
    answers += m.role == "assistant" && m.content == "ANSWER: yes";
  }
  EXPECT_EQ(actions, 4);
  EXPECT_EQ(answers, static_cast<int>(seen.size()) - 1);
}

TEST(Eval, CtrlStaticPromptIsSelfContained) {
  auto t = load("m1_river_field");
  std::vector<std::size_t> sizes;
  std::mutex mu;
  ScriptedAdapter spy("spy", [&](const AdapterRequest& r) {
    std::lock_guard lock(mu);
    sizes.push_back(r.messages.size());
    return std::string("ANSWER: 1");
  });
  run_ctrl_static(t, spy, *standard_registry(), fast(SerializerKind::symbolic));
  ASSERT_EQ(sizes.size(), t.probes.size());
  for (auto n : sizes) EXPECT_EQ(n, 2u);
}

TEST(Eval, ContextOverflowIsATransportFailure) {
  auto t = load("p2_corridor_gauntlet");
  std::atomic<int> calls{0};
  ScriptedAdapter spy("spy", [&](const AdapterRequest&) {
    ++calls;
    return std::string("ANSWER: key");
  });
  auto opt = fast();
  opt.context_tokens = 50;
  auto records = run_in_nav(t, spy, *standard_registry(), opt);
  ASSERT_FALSE(records.empty());
  for (const auto& r : records) {
    EXPECT_EQ(r.verdict, Verdict::transport_failure);
    EXPECT_TRUE(r.reason.starts_with("context overflow")) << r.reason;
    EXPECT_TRUE(r.model_output.empty());
  }
  EXPECT_EQ(calls.load(), 0);
}

TEST(Eval, RetriesAreBoundedAndNeverFabricate) {
  auto t = load("p3_rotation_challenge");
  std::atomic<int> calls{0};
  ScriptedAdapter flaky("flaky", [&](const AdapterRequest&) -> std::string {
    ++calls;
    throw TransportError("503 service unavailable", true);
  });
  auto opt = fast();
  opt.retry.max_attempts = 3;
  auto records = run_ctrl_static(t, flaky, *standard_registry(), opt);
  ASSERT_EQ(records.size(), t.probes.size());
  for (const auto& r : records) {
    EXPECT_EQ(r.verdict, Verdict::transport_failure);
    EXPECT_NE(r.reason.find("attempt 3/3"), std::string::npos) << r.reason;
  }
  EXPECT_EQ(calls.load(), 3 * static_cast<int>(t.probes.size()));
}

TEST(Eval, FatalErrorsAreNotRetried) {
  auto t = load("p3_rotation_challenge");
  std::atomic<int> calls{0};
  ScriptedAdapter denied("denied", [&](const AdapterRequest&) -> std::string {
    ++calls;
    throw TransportError("401 unauthorized", false);
  });
  auto records = run_ctrl_static(t, denied, *standard_registry(), fast());
  EXPECT_EQ(calls.load(), static_cast<int>(records.size()));
}

TEST(Eval, RetrySucceedsAfterTransientFailure) {
  auto t = load("p1_dense_array");
  std::atomic<int> calls{0};
  OracleAdapter oracle;
  ScriptedAdapter once("once", [&](const AdapterRequest& r) -> std::string {
    if (calls++ % 2 == 0) throw TransportError("timeout", true);
    return oracle.complete(r).text;
  });
  auto records = run_ctrl_static(t, once, *standard_registry(), fast());
  for (const auto& r : records) EXPECT_EQ(r.verdict, Verdict::correct) << r.reason;
}

TEST(Eval, ParallelRunKeepsProbeOrder) {
  auto t = load("c6_s42");
  OracleAdapter oracle;
  ScriptedAdapter slow("slow", [&](const AdapterRequest& r) {
    // earlier probes finish last
    std::this_thread::sleep_for(std::chrono::milliseconds(5 * (10 - r.scene->probe.step % 10)));
    return oracle.complete(r).text;
  });
  auto opt = fast();
  opt.parallelism = 4;
  std::vector<std::string> streamed;
  opt.on_record = [&](const EvalRecord& r) { streamed.push_back(r.probe_id); };
  auto par = run_ctrl_static(t, slow, *standard_registry(), opt);
  auto seq = run_ctrl_static(t, oracle, *standard_registry(), fast());
  ASSERT_EQ(par.size(), seq.size());
  for (std::size_t i = 0; i < par.size(); ++i) {
    EXPECT_EQ(par[i].probe_id, seq[i].probe_id);
    EXPECT_EQ(streamed[i], seq[i].probe_id);
    EXPECT_EQ(par[i].verdict, Verdict::correct);
  }
}

TEST(Eval, RecordsRoundTripThroughJsonl) {
  OracleAdapter oracle;
  auto t = load("m4_unreliable_narrator");
  auto opt = fast(SerializerKind::memory);
  opt.run_id = "r1";
  auto records = run_in_nav(t, oracle, *standard_registry(), opt);
  std::stringstream ss;
  for (const auto& r : records) write_record(ss, r);
  auto back = read_records(ss);
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(record_to_json(back[i]), record_to_json(records[i]));
    EXPECT_EQ(back[i].run_id, "r1");
    EXPECT_EQ(back[i].prompt_version, "v1");
    EXPECT_EQ(back[i].episode, "m4_unreliable_narrator");
    EXPECT_EQ(back[i].level, "m4_unreliable_narrator");
  }
  std::stringstream bad("{\"schema_version\": 9}\n");
  EXPECT_THROW(read_records(bad), std::invalid_argument);
}

TEST(Eval, QuintileOfRelativePosition) {
  // ceil(5 * step / length), clamped to [1, 5]
  EXPECT_EQ(quintile(0, 10), 1);
  EXPECT_EQ(quintile(2, 10), 1);
  EXPECT_EQ(quintile(3, 10), 2);
  EXPECT_EQ(quintile(10, 10), 5);
  EXPECT_EQ(quintile(12, 10), 5);
  EXPECT_EQ(quintile(3, 0), 1);
  for (int len = 1; len < 40; ++len) {
    for (int s = 0; s <= len; ++s) {
      int q = 1;
      while (q < 5 && q * len < 5 * s) ++q;
      EXPECT_EQ(quintile(s, len), q) << s << "/" << len;
    }
  }
}

TEST(Eval, PluginProbesGradeThroughTheirEvaluator) {
  auto reg = standard_registry();
  Trajectory raw;
  raw.segments.push_back({"levels/p1_dense_array.txt", 0, {}});
  raw.probes.push_back({0, 0, "spatial_relation", "Is the green ball left of the red ball?", "",
                        {{"params", {{"a", {{"kind", "ball"}, {"color", "green"}}}, {"b", {{"kind", "key"}, {"color", "blue"}}}}}}});
  auto t = resolve_trajectory(raw, source_dir(), *reg, "plugin");
  OracleAdapter oracle;
  auto ok = run_ctrl_static(t, oracle, *reg, fast());
  ASSERT_EQ(ok.size(), 1u);
  EXPECT_EQ(ok[0].verdict, Verdict::correct);
  EXPECT_EQ(ok[0].ground_truth, "no");
  auto yes = ScriptedAdapter::fixed("ANSWER: yes");
  EXPECT_EQ(run_ctrl_static(t, *yes, *reg, fast())[0].verdict, Verdict::hallucinated);
  auto blank = ScriptedAdapter::fixed("ANSWER:");
  EXPECT_EQ(run_ctrl_static(t, *blank, *reg, fast())[0].verdict, Verdict::unparseable);
}

TEST(Eval, ProtocolNames) {
  EXPECT_EQ(parse_protocol("InNav"), Protocol::in_nav);
  EXPECT_EQ(parse_protocol(to_string(Protocol::ctrl_static)), Protocol::ctrl_static);
}
