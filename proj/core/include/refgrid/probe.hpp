#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "refgrid/observation.hpp"
#include "refgrid/world.hpp"

namespace refgrid {

enum class Category { P, M, C, U, X };
enum class AnswerType { presence, count, state, location, causal, uncertainty };
enum class ConflictPolicy { observation_first, testimony_first };

std::string_view to_string(Category c);
std::string_view to_string(AnswerType a);
std::string_view to_string(ConflictPolicy p);
Category parse_category(std::string_view s);
AnswerType parse_answer_type(std::string_view s);
ConflictPolicy parse_conflict_policy(std::string_view s);

/// Ill-posed query: distinct from a fact that merely cannot be determined.
class ProbeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ObjectFilter {
  std::optional<ObjectKind> kind;
  std::optional<Color> color;
  std::optional<Condition> condition;
  std::optional<DoorState> door_state;

  bool matches(const WorldObject& o) const;
  /// "blue ball", "open door", "object".
  std::string describe() const;
  friend bool operator==(const ObjectFilter&, const ObjectFilter&) = default;
};

enum class Scope { fov, room, region };

struct Region {
  Position origin;
  int width = 1;
  int height = 1;
  bool contains(Position p) const {
    return p.col >= origin.col && p.row >= origin.row && p.col < origin.col + width && p.row < origin.row + height;
  }
  friend bool operator==(const Region&, const Region&) = default;
};

struct PresenceQuery {
  ObjectFilter filter;
  Scope scope = Scope::fov;
  std::optional<Region> region;
  friend bool operator==(const PresenceQuery&, const PresenceQuery&) = default;
};

struct CountQuery {
  ObjectFilter filter;
  Scope scope = Scope::fov;
  std::optional<Region> region;
  friend bool operator==(const CountQuery&, const CountQuery&) = default;
};

/// A cell named egocentrically (relative to the pose at probe time), by map
/// position, by door identifier, or as the unique object matching a filter.
struct CellRef {
  std::variant<EgoPos, Position, std::string, ObjectFilter> target;
  friend bool operator==(const CellRef&, const CellRef&) = default;
};

enum class Attribute { color, kind, condition, door_state, code };

struct StateQuery {
  CellRef target;
  Attribute attribute = Attribute::color;
  friend bool operator==(const StateQuery&, const StateQuery&) = default;
};

struct LocationQuery {
  ObjectFilter filter;
  friend bool operator==(const LocationQuery&, const LocationQuery&) = default;
};

enum class Outcome { passable, fire_active, flood_active, door_state, object_code, condition };

struct CausalQuery {
  std::vector<Action> script;
  CellRef target;
  Outcome outcome = Outcome::passable;
  friend bool operator==(const CausalQuery&, const CausalQuery&) = default;
};

using Fact = std::variant<PresenceQuery, CountQuery, StateQuery>;

struct UncertaintyQuery {
  Fact fact;
  friend bool operator==(const UncertaintyQuery&, const UncertaintyQuery&) = default;
};

using Query = std::variant<PresenceQuery, CountQuery, StateQuery, LocationQuery, CausalQuery, UncertaintyQuery>;

AnswerType answer_type_of(const Query& q);

nlohmann::json query_to_json(const Query& q);
/// Throws ProbeError on malformed input.
Query query_from_json(const nlohmann::json& j);

struct CannotDetermine {
  friend bool operator==(const CannotDetermine&, const CannotDetermine&) = default;
};

using GroundTruth = std::variant<bool, int, std::string, EgoPos, CannotDetermine>;

/// Canonical answer text: yes/no for presence, true/false for other booleans,
/// {"steps_ahead": a, "lateral": l} for locations, "can't determine".
std::string render_truth(const GroundTruth& t, AnswerType type);
/// Reads an operator-recorded answer string.
GroundTruth parse_literal_truth(std::string_view text, AnswerType type);

/// Resolves the world cell a reference points at. Throws ProbeError.
Position resolve_cell(const CellRef& ref, const World& world);

/// Cells whose contents can change without the agent acting or seeing it: river
/// cells, landing cells downstream of a river, and plate-driven doors.
bool is_volatile(const World& world, Position p);

/// Ground truth from full simulator state. `history` holds the observations of
/// the current segment up to and including the current step; only uncertainty
/// queries consult it. Throws ProbeError for ill-posed queries.
GroundTruth compute_ground_truth(const Query& q, const World& world, const std::vector<Observation>& history);

/// Whether `fact` follows from what the agent has observed (see is_volatile).
bool determinable(const Fact& fact, const World& world, const std::vector<Observation>& history);

struct Probe {
  std::string id;
  Category category = Category::P;
  AnswerType answer_type = AnswerType::presence;
  std::string probe_type = "presence";
  std::string question;
  std::optional<Query> query;
  std::optional<std::string> literal;
  ConflictPolicy policy = ConflictPolicy::observation_first;
  int segment = 0;
  int step = 0;
  nlohmann::json metadata = nlohmann::json::object();
};

/// Checks the exactly-one-of {query, literal} rule and policy restrictions.
void validate_probe(const Probe& p);

enum class Verdict { correct, hallucinated, unparseable, transport_failure };
std::string_view to_string(Verdict v);
Verdict parse_verdict(std::string_view s);

struct Grade {
  Verdict verdict = Verdict::unparseable;
  std::string extracted;  // normalized answer text that was graded
  std::string reason;
};

/// Text after the last "ANSWER:" line (case-insensitive), or the whole text.
std::string extract_answer(std::string_view text);
/// Lowercase, punctuation stripped, articles removed, whitespace collapsed.
std::string normalize_answer(std::string_view text);
bool is_abstention(std::string_view normalized);
std::optional<int> parse_count(std::string_view text);
std::optional<bool> parse_yes_no(std::string_view text);
std::optional<EgoPos> parse_location(std::string_view text);

Grade grade(std::string_view answer_text, const GroundTruth& truth, AnswerType type);

}  // namespace refgrid
