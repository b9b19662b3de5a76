#include "refgrid/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <istream>
#include <ostream>
#include <thread>

#include <fmt/format.h>

namespace refgrid {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Protocol p) { return p == Protocol::ctrl_static ? "ctrlstatic" : "innav"; }

Protocol parse_protocol(std::string_view s) {
  if (s == "ctrlstatic" || s == "ctrl_static" || s == "CtrlStatic") return Protocol::ctrl_static;
  if (s == "innav" || s == "in_nav" || s == "InNav") return Protocol::in_nav;
  throw UnknownName("unknown protocol '" + std::string(s) + "'");
}

// ---- adapters ---------------------------------------------------------------

namespace {

const ProbeScene& need_scene(const AdapterRequest& r, std::string_view who) {
  if (!r.scene) throw TransportError(fmt::format("{} adapter needs the probe scene", who), false);
  return *r.scene;
}

std::string answer_from(const ProbeScene& s, std::size_t index) {
  index = std::min(index, s.worlds.size() - 1);
  std::vector<Observation> hist(s.history.begin(), s.history.begin() + static_cast<std::ptrdiff_t>(index) + 1);
  auto truth = resolve_truth(s.probe, s.registry, s.worlds[index], hist, s.actions);
  return "ANSWER: " + truth.rendered;
}

}  // namespace

Completion OracleAdapter::complete(const AdapterRequest& request) {
  const ProbeScene& s = need_scene(request, "oracle");
  return {answer_from(s, s.worlds.size() - 1)};
}

Completion StaleMemoryAdapter::complete(const AdapterRequest& request) {
  const ProbeScene& s = need_scene(request, "stale-memory");
  const int last = static_cast<int>(s.worlds.size()) - 1;
  try {
    return {answer_from(s, static_cast<std::size_t>(std::max(0, last - lag_)))};
  } catch (const ProbeError&) {
    // question has no referent in the remembered state
    return {"ANSWER: can't determine"};
  }
}

std::shared_ptr<ScriptedAdapter> ScriptedAdapter::fixed(std::string text) {
  return std::make_shared<ScriptedAdapter>("fixed", [text = std::move(text)](const AdapterRequest&) { return text; });
}

// ---- records ----------------------------------------------------------------

int quintile(int step, int segment_length) {
  if (segment_length <= 0) return 1;
  auto q = static_cast<int>(std::ceil(5.0 * step / segment_length));
  return std::clamp(q, 1, 5);
}

json record_to_json(const EvalRecord& r) {
  return {{"schema_version", r.schema_version},
          {"run_id", r.run_id},
          {"model_id", r.model_id},
          {"trajectory_id", r.trajectory_id},
          {"probe_id", r.probe_id},
          {"probe_type", r.probe_type},
          {"protocol", to_string(r.protocol)},
          {"serializer", to_string(r.serializer)},
          {"category", to_string(r.category)},
          {"level", r.level},
          {"episode", r.episode},
          {"segment", r.segment},
          {"step", r.step},
          {"question", r.question},
          {"ground_truth", r.ground_truth},
          {"model_output", r.model_output},
          {"verdict", to_string(r.verdict)},
          {"reason", r.reason},
          {"latency_ms", r.latency_ms},
          {"quintile", r.quintile},
          {"prompt_version", r.prompt_version},
          {"prompt_tokens", r.prompt_tokens},
          {"completion_tokens", r.completion_tokens}};
}

EvalRecord record_from_json(const json& j) {
  EvalRecord r;
  r.schema_version = j.at("schema_version").get<int>();
  if (r.schema_version != kResultsSchemaVersion) {
    throw std::invalid_argument(fmt::format("unsupported results schema version {}", r.schema_version));
  }
  r.run_id = j.at("run_id").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.trajectory_id = j.at("trajectory_id").get<std::string>();
  r.probe_id = j.at("probe_id").get<std::string>();
  r.probe_type = j.at("probe_type").get<std::string>();
  r.protocol = parse_protocol(j.at("protocol").get<std::string>());
  r.serializer = parse_serializer(j.at("serializer").get<std::string>());
  r.category = parse_category(j.at("category").get<std::string>());
  r.level = j.at("level").get<std::string>();
  r.episode = j.at("episode").get<std::string>();
  r.segment = j.at("segment").get<int>();
  r.step = j.at("step").get<int>();
  r.question = j.at("question").get<std::string>();
  r.ground_truth = j.at("ground_truth").get<std::string>();
  r.model_output = j.at("model_output").get<std::string>();
  r.verdict = parse_verdict(j.at("verdict").get<std::string>());
  r.reason = j.value("reason", "");
  r.latency_ms = j.value("latency_ms", 0.0);
  r.quintile = j.at("quintile").get<int>();
  r.prompt_version = j.value("prompt_version", std::string(kPromptVersion));
  r.prompt_tokens = j.value("prompt_tokens", 0);
  r.completion_tokens = j.value("completion_tokens", 0);
  return r;
}

std::vector<EvalRecord> read_records(std::istream& in) {
  std::vector<EvalRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::invalid_argument(fmt::format("results line {}: {}", n, e.what()));
    }
  }
  return out;
}

void write_record(std::ostream& out, const EvalRecord& r) { out << record_to_json(r).dump() << '\n'; }

// ---- grading ----------------------------------------------------------------

Grade grade_probe(const Probe& p, const ProbeRegistry& registry, const ResolvedTruth& truth, const std::string& reply) {
  const ProbeType& type = registry.at(p.probe_type);
  if (type.builtin) return grade(reply, truth.truth, p.answer_type);
  Grade g;
  g.extracted = normalize_answer(extract_answer(reply));
  if (g.extracted.empty()) {
    g.verdict = Verdict::unparseable;
    g.reason = "no answer found";
    return g;
  }
  g.verdict = type.evaluate(truth.rendered, reply) ? Verdict::correct : Verdict::hallucinated;
  if (g.verdict == Verdict::hallucinated) g.reason = "rejected by " + p.probe_type + " evaluator";
  return g;
}

// ---- runners ----------------------------------------------------------------

namespace {

class Pacer {
 public:
  explicit Pacer(std::chrono::milliseconds interval) : interval_(interval) {}
  void wait() {
    if (interval_.count() <= 0) return;
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(mu_);
      auto now = std::chrono::steady_clock::now();
      slot = std::max(now, next_);
      next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  std::chrono::milliseconds interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

struct CallResult {
  std::optional<Completion> completion;
  std::string failure;
  double latency_ms = 0;
};

CallResult call_model(ModelAdapter& adapter, const AdapterRequest& req, const RunOptions& opt, Pacer& pacer) {
  CallResult out;
  if (opt.context_tokens > 0) {
    auto need = estimate_tokens(req.messages);
    if (need > opt.context_tokens) {
      out.failure = fmt::format("context overflow: prompt needs ~{} tokens, budget is {}", need, opt.context_tokens);
      return out;
    }
  }
  auto backoff = opt.retry.initial_backoff;
  const int attempts = std::max(1, opt.retry.max_attempts);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    pacer.wait();
    auto start = std::chrono::steady_clock::now();
    try {
      out.completion = adapter.complete(req);
      out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      out.failure.clear();
      return out;
    } catch (const ContextOverflow& e) {
      out.failure = std::string("context overflow: ") + e.what();
      return out;
    } catch (const TransportError& e) {
      out.failure = fmt::format("attempt {}/{}: {}", attempt, attempts, e.what());
      if (!e.retryable()) return out;
    }
    if (attempt < attempts) {
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(backoff.count()) * opt.retry.backoff_factor));
    }
  }
  return out;
}

struct Job {
  const Probe* probe = nullptr;
  std::vector<World> worlds;
  std::vector<Observation> history;  // current segment
  ResolvedTruth truth;
  std::string serialized;  // CtrlStatic prompt body
  int segment_length = 0;
};

std::string level_name(const LoadedTrajectory& t, int segment) {
  return fs::path(t.raw.segments.at(static_cast<std::size_t>(segment)).level_file).stem().string();
}

EvalRecord base_record(const LoadedTrajectory& t, const Job& job, const std::string& model, Protocol protocol,
                       const RunOptions& opt) {
  const Probe& p = *job.probe;
  EvalRecord r;
  r.run_id = opt.run_id;
  r.model_id = model;
  r.trajectory_id = t.id;
  r.probe_id = p.id;
  r.probe_type = p.probe_type;
  r.protocol = protocol;
  r.serializer = opt.serializer;
  r.category = p.category;
  r.level = level_name(t, p.segment);
  r.episode = t.id;
  r.segment = p.segment;
  r.step = p.step;
  r.question = p.question;
  r.ground_truth = job.truth.rendered;
  r.quintile = quintile(p.step, job.segment_length);
  return r;
}

void finish_record(EvalRecord& r, const Job& job, const ProbeRegistry& registry, const CallResult& res) {
  r.latency_ms = res.latency_ms;
  if (!res.completion) {
    r.verdict = Verdict::transport_failure;
    r.reason = res.failure;
    return;
  }
  r.model_output = res.completion->text;
  r.prompt_tokens = res.completion->prompt_tokens;
  r.completion_tokens = res.completion->completion_tokens;
  Grade g = grade_probe(*job.probe, registry, job.truth, r.model_output);
  r.verdict = g.verdict;
  r.reason = g.reason;
}

std::string in_nav_observation(SerializerKind kind, const std::vector<Observation>& history) {
  const Observation& cur = history.back();
  if (kind != SerializerKind::memory) return serialize(kind, {cur});
  std::string narrative = history.size() == 1 ? narrate_start(cur) : narrate_step(history[history.size() - 2], cur);
  return narrative + "\n" + serialize_memory({cur});
}

/// Walks the trajectory once, handing each due probe a filled-in job. The
/// `frame` callback sees every frame before its probes.
void collect(const LoadedTrajectory& t, const ProbeRegistry& registry, SerializerKind serializer,
             const std::function<void(const ReplayFrame&)>& frame, const std::function<void(Job&&)>& sink) {
  std::vector<World> seg_worlds;
  int current_segment = -1;
  replay(t, [&](const ReplayFrame& f) {
    if (f.segment != current_segment) {
      seg_worlds.clear();
      current_segment = f.segment;
    }
    seg_worlds.push_back(f.world);
    if (frame) frame(f);
    for (const Probe* p : f.due) {
      Job job;
      job.probe = p;
      job.worlds = seg_worlds;
      job.history.assign(f.history.begin() + static_cast<std::ptrdiff_t>(f.segment_begin), f.history.end());
      const auto& acts = t.actions[static_cast<std::size_t>(f.segment)];
      job.truth = resolve_truth(*p, registry, f.world, job.history, acts);
      job.segment_length = static_cast<int>(acts.size());
      job.serialized = serializer == SerializerKind::memory ? serialize_memory(f.history) : serialize(serializer, f.history);
      sink(std::move(job));
    }
  });
}

}  // namespace

std::vector<EvalRecord> run_ctrl_static(const LoadedTrajectory& t, ModelAdapter& adapter, const ProbeRegistry& registry,
                                        const RunOptions& opt) {
  std::vector<Job> jobs;
  collect(t, registry, opt.serializer, nullptr, [&](Job&& j) { jobs.push_back(std::move(j)); });

  const std::string model = adapter.model_id();
  Pacer pacer(opt.retry.min_interval);
  std::vector<std::optional<EvalRecord>> slots(jobs.size());
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      auto messages = ctrl_static_messages(opt.serializer, job.serialized, *job.probe);
      ProbeScene scene{*job.probe, registry, job.worlds, job.history,
                       t.actions[static_cast<std::size_t>(job.probe->segment)]};
      AdapterRequest req{messages, opt.decoding, &scene};
      EvalRecord rec = base_record(t, job, model, Protocol::ctrl_static, opt);
      CallResult res;
      try {
        res = call_model(adapter, req, opt, pacer);
      } catch (const std::exception& e) {
        res.failure = std::string("adapter error: ") + e.what();
      }
      finish_record(rec, job, registry, res);
      {
        std::lock_guard lock(mu);
        slots[i] = std::move(rec);
      }
      cv.notify_all();
    }
  };

  const auto n_threads = static_cast<std::size_t>(std::clamp(opt.parallelism, 1, 64));
  std::vector<std::thread> threads;
  if (n_threads > 1) {
    for (std::size_t k = 0; k < std::min(n_threads, jobs.size()); ++k) threads.emplace_back(work);
  }

  std::vector<EvalRecord> out;
  out.reserve(jobs.size());
  if (threads.empty()) {
    work();
  }
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return slots[i].has_value(); });
    out.push_back(*slots[i]);
    lock.unlock();
    if (opt.on_record) opt.on_record(out.back());
  }
  for (auto& th : threads) th.join();
  return out;
}

std::vector<EvalRecord> run_in_nav(const LoadedTrajectory& t, ModelAdapter& adapter, const ProbeRegistry& registry,
                                   const RunOptions& opt) {
  const std::string model = adapter.model_id();
  Pacer pacer(opt.retry.min_interval);
  std::vector<ChatMessage> convo{{"system", system_preamble(opt.serializer)}};
  std::vector<EvalRecord> out;
  std::vector<Observation> history;

  collect(
      t, registry, opt.serializer,
      [&](const ReplayFrame& f) {
        if (f.step > 0) {
          const auto& acts = t.actions[static_cast<std::size_t>(f.segment)];
          convo.push_back({"assistant", action_turn(acts[static_cast<std::size_t>(f.step - 1)])});
        }
        history.push_back(f.observation);
        convo.push_back({"user", observation_turn(in_nav_observation(opt.serializer, history))});
      },
      [&](Job&& job) {
        convo.push_back({"user", probe_text(*job.probe)});
        ProbeScene scene{*job.probe, registry, job.worlds, job.history,
                         t.actions[static_cast<std::size_t>(job.probe->segment)]};
        AdapterRequest req{convo, opt.decoding, &scene};
        EvalRecord rec = base_record(t, job, model, Protocol::in_nav, opt);
        CallResult res;
        try {
          res = call_model(adapter, req, opt, pacer);
        } catch (const std::exception& e) {
          res.failure = std::string("adapter error: ") + e.what();
        }
        finish_record(rec, job, registry, res);
        if (res.completion) {
          convo.push_back({"assistant", res.completion->text});
        } else {
          convo.pop_back();
        }
        out.push_back(std::move(rec));
        if (opt.on_record) opt.on_record(out.back());
      });
  return out;
}

std::vector<EvalRecord> run_protocol(Protocol protocol, const LoadedTrajectory& t, ModelAdapter& adapter,
                                     const ProbeRegistry& registry, const RunOptions& options) {
  return protocol == Protocol::ctrl_static ? run_ctrl_static(t, adapter, registry, options)
                                           : run_in_nav(t, adapter, registry, options);
}

}  // namespace refgrid
