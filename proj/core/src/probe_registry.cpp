#include "refgrid/probe_registry.hpp"

#include <fmt/format.h>

namespace refgrid {

namespace {

std::string default_question(const Query& q) {
  struct V {
    std::string scope_words(Scope s) const {
      return s == Scope::fov ? "in your current field of view" : s == Scope::room ? "in this room" : "in the marked region";
    }
    std::string operator()(const PresenceQuery& p) const {
      return fmt::format("Is there a {} {}?", p.filter.describe(), scope_words(p.scope));
    }
    std::string operator()(const CountQuery& c) const {
      return fmt::format("How many {}s are there {}?", c.filter.describe(), scope_words(c.scope));
    }
    std::string operator()(const StateQuery&) const { return "What is the state of the referenced object?"; }
    std::string operator()(const LocationQuery& l) const {
      return fmt::format("Where is the {} relative to you?", l.filter.describe());
    }
    std::string operator()(const CausalQuery&) const { return "What will the outcome be after the described actions?"; }
    std::string operator()(const UncertaintyQuery& u) const {
      Query fact = std::visit([](const auto& f) { return Query{f}; }, u.fact);
      return std::visit(*this, fact) + " Answer \"can't determine\" if your observations do not settle it.";
    }
  };
  return std::visit(V{}, q);
}

ProbeType builtin(AnswerType type) {
  ProbeType t;
  t.name = std::string(to_string(type));
  t.answer_type = type;
  t.builtin = true;
  t.generate = [type](const ProbeContext& ctx) {
    if (!ctx.params.contains("query")) throw ProbeError("built-in generation needs metadata.query");
    Query q = query_from_json(ctx.params.at("query"));
    if (answer_type_of(q) != type) throw ProbeError("query type does not match probe type");
    GroundTruth truth = compute_ground_truth(q, ctx.world, ctx.history);
    return GeneratedProbe{default_question(q), render_truth(truth, type)};
  };
  t.evaluate = [type](const std::string& truth, const std::string& response) {
    return grade(response, parse_literal_truth(truth, type), type).verdict == Verdict::correct;
  };
  return t;
}

std::optional<EgoPos> locate(const Observation& obs, const ObjectFilter& f) {
  std::optional<EgoPos> found;
  const int half = obs.half_width();
  for (int d = 0; d < obs.view.depth; ++d) {
    for (int l = -half; l <= half; ++l) {
      if (d == 0 && l == 0) continue;
      const FovCell& c = obs.at({d, l});
      if (!c.visible || !c.object || !f.matches(*c.object)) continue;
      if (found) throw ProbeError("more than one " + f.describe() + " in view");
      found = EgoPos{d, l};
    }
  }
  return found;
}

}  // namespace

ProbeRegistry ProbeRegistry::with_builtins() {
  ProbeRegistry r;
  for (AnswerType a : {AnswerType::presence, AnswerType::count, AnswerType::state, AnswerType::location,
                       AnswerType::causal, AnswerType::uncertainty}) {
    r.register_type(builtin(a));
  }
  return r;
}

void ProbeRegistry::register_type(ProbeType type) {
  if (frozen_) throw RegistryError("probe registry is frozen; register types before evaluation starts");
  if (type.name.empty()) throw RegistryError("probe type needs a name");
  if (!type.generate || !type.evaluate) throw RegistryError("probe type '" + type.name + "' needs generate and evaluate");
  if (types_.contains(type.name)) throw RegistryError("probe type '" + type.name + "' is already registered");
  std::string name = type.name;
  types_.emplace(std::move(name), std::move(type));
}

const ProbeType* ProbeRegistry::find(std::string_view name) const {
  auto it = types_.find(name);
  return it == types_.end() ? nullptr : &it->second;
}

const ProbeType& ProbeRegistry::at(std::string_view name) const {
  const ProbeType* t = find(name);
  if (!t) throw RegistryError("unregistered probe type '" + std::string(name) + "'");
  return *t;
}

std::vector<std::string> ProbeRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [n, t] : types_) out.push_back(n);
  return out;
}

ProbeType spatial_relation_probe_type() {
  ProbeType t;
  t.name = "spatial_relation";
  t.answer_type = AnswerType::presence;
  t.generate = [](const ProbeContext& ctx) {
    Query qa = query_from_json({{"type", "location"}, {"filter", ctx.params.at("a")}});
    Query qb = query_from_json({{"type", "location"}, {"filter", ctx.params.at("b")}});
    const auto& fa = std::get<LocationQuery>(qa).filter;
    const auto& fb = std::get<LocationQuery>(qb).filter;
    Observation obs = observe(ctx.world);
    auto a = locate(obs, fa);
    auto b = locate(obs, fb);
    if (!a || !b) throw ProbeError("spatial relation needs both objects in view");
    return GeneratedProbe{fmt::format("Is the {} to the left of the {}?", fa.describe(), fb.describe()),
                          a->lateral < b->lateral ? "yes" : "no"};
  };
  t.evaluate = [](const std::string& truth, const std::string& response) {
    return grade(response, parse_literal_truth(truth, AnswerType::presence), AnswerType::presence).verdict ==
           Verdict::correct;
  };
  return t;
}

}  // namespace refgrid
