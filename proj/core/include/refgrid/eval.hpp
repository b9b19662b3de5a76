#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "refgrid/probe.hpp"
#include "refgrid/probe_registry.hpp"
#include "refgrid/prompts.hpp"
#include "refgrid/serializers.hpp"
#include "refgrid/trajectory.hpp"

namespace refgrid {

enum class Protocol { ctrl_static, in_nav };
std::string_view to_string(Protocol p);  // "ctrlstatic" | "innav"
Protocol parse_protocol(std::string_view s);

struct DecodingConfig {
  double temperature = 0.0;
  int answer_tokens = 256;
  int thinking_tokens = 16384;
  std::string reasoning_effort;  // empty: endpoint default
};

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{500};
  double backoff_factor = 2.0;
  /// Minimum spacing between requests across all workers; 0 disables.
  std::chrono::milliseconds min_interval{0};
};

/// Thrown by adapters. Retryable failures are retried under RetryPolicy.
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& message, bool retryable) : std::runtime_error(message), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

class ContextOverflow : public TransportError {
 public:
  explicit ContextOverflow(const std::string& message) : TransportError(message, false) {}
};

/// Full-state view handed to scripted adapters. Network adapters ignore it.
struct ProbeScene {
  const Probe& probe;
  const ProbeRegistry& registry;
  /// World snapshots of the probe's segment, index = step, up to the probe step.
  const std::vector<World>& worlds;
  /// Observations of the probe's segment, index = step, up to the probe step.
  const std::vector<Observation>& history;
  const std::vector<Action>& actions;
};

struct AdapterRequest {
  const std::vector<ChatMessage>& messages;
  const DecodingConfig& decoding;
  const ProbeScene* scene = nullptr;
};

struct Completion {
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

/// Implementations must be safe to call from several threads at once.
class ModelAdapter {
 public:
  virtual ~ModelAdapter() = default;
  virtual std::string model_id() const = 0;
  virtual Completion complete(const AdapterRequest& request) = 0;
};

/// Answers with the ground truth computed from full simulator state.
class OracleAdapter : public ModelAdapter {
 public:
  std::string model_id() const override { return "oracle"; }
  Completion complete(const AdapterRequest& request) override;
};

/// Answers from the state `lag` steps before the probe (clamped to the segment start).
class StaleMemoryAdapter : public ModelAdapter {
 public:
  explicit StaleMemoryAdapter(int lag = 3) : lag_(lag) {}
  std::string model_id() const override { return "stale-" + std::to_string(lag_); }
  Completion complete(const AdapterRequest& request) override;

 private:
  int lag_;
};

/// Test double: replies through a callback.
class ScriptedAdapter : public ModelAdapter {
 public:
  using Fn = std::function<std::string(const AdapterRequest&)>;
  ScriptedAdapter(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}
  /// Always replies `text`.
  static std::shared_ptr<ScriptedAdapter> fixed(std::string text);
  std::string model_id() const override { return id_; }
  Completion complete(const AdapterRequest& request) override { return {fn_(request)}; }

 private:
  std::string id_;
  Fn fn_;
};

inline constexpr int kResultsSchemaVersion = 1;

struct EvalRecord {
  int schema_version = kResultsSchemaVersion;
  std::string run_id;
  std::string model_id;
  std::string trajectory_id;
  std::string probe_id;
  std::string probe_type;
  Protocol protocol = Protocol::ctrl_static;
  SerializerKind serializer = SerializerKind::grid;
  Category category = Category::P;
  std::string level;
  std::string episode;
  int segment = 0;
  int step = 0;
  std::string question;
  std::string ground_truth;
  std::string model_output;
  Verdict verdict = Verdict::unparseable;
  std::string reason;
  double latency_ms = 0;
  int quintile = 1;
  std::string prompt_version{kPromptVersion};
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

nlohmann::json record_to_json(const EvalRecord& r);
EvalRecord record_from_json(const nlohmann::json& j);
std::vector<EvalRecord> read_records(std::istream& in);
void write_record(std::ostream& out, const EvalRecord& r);

/// ceil(5 * step / segment_length) clamped to [1, 5].
int quintile(int step, int segment_length);

struct RunOptions {
  std::string run_id = "run";
  SerializerKind serializer = SerializerKind::grid;
  DecodingConfig decoding;
  RetryPolicy retry;
  /// Concurrent probes (CtrlStatic) or trajectories (run_many).
  int parallelism = 1;
  /// Prompt budget in estimated tokens; 0 means unlimited.
  std::size_t context_tokens = 0;
  /// Called once per finished record, in probe order, from a single thread.
  std::function<void(const EvalRecord&)> on_record;
};

/// Grades one reply against the probe's truth (plugin types use their own evaluator).
Grade grade_probe(const Probe& p, const ProbeRegistry& registry, const ResolvedTruth& truth, const std::string& reply);

std::vector<EvalRecord> run_ctrl_static(const LoadedTrajectory& t, ModelAdapter& adapter, const ProbeRegistry& registry,
                                        const RunOptions& options);
std::vector<EvalRecord> run_in_nav(const LoadedTrajectory& t, ModelAdapter& adapter, const ProbeRegistry& registry,
                                   const RunOptions& options);
std::vector<EvalRecord> run_protocol(Protocol protocol, const LoadedTrajectory& t, ModelAdapter& adapter,
                                     const ProbeRegistry& registry, const RunOptions& options);

}  // namespace refgrid
