#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "refgrid/probe.hpp"

namespace refgrid {

/// What a probe type sees when asked to generate: the world at the probe step,
/// the current segment's observations, the segment's action script and the
/// probe's own parameters (its trajectory metadata).
struct ProbeContext {
  const World& world;
  const std::vector<Observation>& history;
  const std::vector<Action>& actions;
  int step = 0;
  const nlohmann::json& params;
};

struct GeneratedProbe {
  std::string question;
  std::string ground_truth;
};

struct ProbeType {
  std::string name;
  /// Grading family used for built-ins; plugin types grade through `evaluate`.
  AnswerType answer_type = AnswerType::state;
  bool builtin = false;
  std::function<GeneratedProbe(const ProbeContext&)> generate;
  std::function<bool(const std::string& ground_truth, const std::string& response)> evaluate;
};

class RegistryError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Name -> probe type. Write-once: freeze() before evaluation starts, after
/// which registration throws and lookups are safe from any thread.
class ProbeRegistry {
 public:
  /// The six answer-type probes.
  static ProbeRegistry with_builtins();

  void register_type(ProbeType type);
  const ProbeType* find(std::string_view name) const;
  const ProbeType& at(std::string_view name) const;
  std::vector<std::string> names() const;
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

 private:
  std::map<std::string, ProbeType, std::less<>> types_;
  bool frozen_ = false;
};

/// Example plugin: "Is the <a> left of the <b>?" over the current view.
/// Parameters: {"a": filter, "b": filter}; answers yes/no.
ProbeType spatial_relation_probe_type();

}  // namespace refgrid
