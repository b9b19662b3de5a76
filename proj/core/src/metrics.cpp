#include "refgrid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "refgrid/world.hpp"

namespace refgrid {

namespace {

const std::vector<std::string> kFields = {"model", "category", "serializer", "level", "quintile",
                                          "protocol", "probe_type", "trajectory", "episode"};

double rate_of(const Tally& t) { return static_cast<double>(t.hallucinated) / static_cast<double>(t.graded()); }

std::vector<std::string> key_of(const EvalRecord& r, const std::vector<std::string>& group_by) {
  std::vector<std::string> key;
  key.reserve(group_by.size());
  for (const auto& f : group_by) key.push_back(group_value(r, f));
  return key;
}

}  // namespace

std::string group_value(const EvalRecord& r, const std::string& field) {
  if (field == "model") return r.model_id;
  if (field == "category") return std::string(to_string(r.category));
  if (field == "serializer") return std::string(to_string(r.serializer));
  if (field == "level") return r.level;
  if (field == "quintile") return std::to_string(r.quintile);
  if (field == "protocol") return std::string(to_string(r.protocol));
  if (field == "probe_type") return r.probe_type;
  if (field == "trajectory") return r.trajectory_id;
  if (field == "episode") return r.episode;
  throw MetricError("unknown group field '" + field + "'");
}

std::vector<std::string> parse_group_by(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (item.empty()) continue;
    if (std::find(kFields.begin(), kFields.end(), item) == kFields.end()) {
      throw MetricError("unknown group field '" + item + "'");
    }
    out.push_back(item);
  }
  return out;
}

void Tally::add(Verdict v) {
  switch (v) {
    case Verdict::correct: ++correct; break;
    case Verdict::hallucinated: ++hallucinated; break;
    case Verdict::unparseable: ++unparseable; break;
    case Verdict::transport_failure: ++transport_failure; break;
  }
}

std::vector<RateRow> hallucination_rate(const std::vector<EvalRecord>& records, const std::vector<std::string>& group_by) {
  std::map<std::vector<std::string>, Tally> groups;
  for (const auto& r : records) groups[key_of(r, group_by)].add(r.verdict);
  std::vector<RateRow> out;
  for (const auto& [key, tally] : groups) {
    if (tally.graded() == 0) continue;
    out.push_back({key, tally, rate_of(tally)});
  }
  return out;
}

double pooled_rate(const std::vector<EvalRecord>& records) {
  Tally t;
  for (const auto& r : records) t.add(r.verdict);
  if (t.graded() == 0) throw MetricError("no graded records");
  return rate_of(t);
}

std::vector<NavEffRow> nav_effect(const std::vector<EvalRecord>& records, const std::vector<std::string>& group_by,
                                  const BootstrapConfig& config) {
  if (config.draws <= 0) throw MetricError("bootstrap needs at least one draw");
  struct PairSlot {
    const EvalRecord* ctrl = nullptr;
    const EvalRecord* innav = nullptr;
  };
  // group -> episode -> pair key -> slot
  std::map<std::vector<std::string>, std::map<std::string, std::map<std::string, PairSlot>>> groups;
  for (const auto& r : records) {
    auto pair_key = fmt::format("{}\x1f{}\x1f{}\x1f{}", r.model_id, r.trajectory_id, r.probe_id, to_string(r.serializer));
    auto& slot = groups[key_of(r, group_by)][r.episode][pair_key];
    const EvalRecord*& target = r.protocol == Protocol::ctrl_static ? slot.ctrl : slot.innav;
    if (target) {
      throw MetricError(fmt::format("duplicate {} record for probe '{}' of '{}'", to_string(r.protocol), r.probe_id,
                                    r.trajectory_id));
    }
    target = &r;
  }
  if (groups.empty()) throw MetricError("no records");

  std::vector<NavEffRow> out;
  for (const auto& [key, episodes] : groups) {
    // Per-episode tallies for each protocol.
    std::vector<std::pair<Tally, Tally>> ep;
    std::size_t pairs = 0;
    for (const auto& [episode, slots] : episodes) {
      Tally c, n;
      for (const auto& [pk, slot] : slots) {
        if (!slot.ctrl || !slot.innav) {
          const EvalRecord* r = slot.ctrl ? slot.ctrl : slot.innav;
          throw MetricError(fmt::format("unpaired record: probe '{}' of '{}' has no {} counterpart", r->probe_id,
                                        r->trajectory_id, slot.ctrl ? "innav" : "ctrlstatic"));
        }
        c.add(slot.ctrl->verdict);
        n.add(slot.innav->verdict);
        ++pairs;
      }
      ep.emplace_back(c, n);
    }
    Tally ctrl, innav;
    for (const auto& [c, n] : ep) {
      ctrl.correct += c.correct;
      ctrl.hallucinated += c.hallucinated;
      innav.correct += n.correct;
      innav.hallucinated += n.hallucinated;
    }
    if (ctrl.graded() == 0 || innav.graded() == 0) continue;

    NavEffRow row;
    row.key = key;
    row.ctrl_rate = rate_of(ctrl);
    row.innav_rate = rate_of(innav);
    row.naveff_pp = 100.0 * (row.innav_rate - row.ctrl_rate);
    row.episodes = ep.size();
    row.pairs = pairs;

    SeededRng rng(config.seed);
    std::vector<double> draws;
    draws.reserve(static_cast<std::size_t>(config.draws));
    for (int d = 0; d < config.draws; ++d) {
      long ch = 0, cg = 0, nh = 0, ng = 0;
      for (std::size_t k = 0; k < ep.size(); ++k) {
        const auto& [c, n] = ep[rng.uniform_below(ep.size())];
        ch += c.hallucinated;
        cg += c.graded();
        nh += n.hallucinated;
        ng += n.graded();
      }
      if (cg == 0 || ng == 0) continue;
      draws.push_back(100.0 * (static_cast<double>(nh) / static_cast<double>(ng) -
                               static_cast<double>(ch) / static_cast<double>(cg)));
    }
    std::sort(draws.begin(), draws.end());
    const double alpha = (1.0 - config.confidence) / 2.0;
    auto pick = [&](double q) {
      auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(draws.size() - 1) + 0.5));
      return draws[std::min(idx, draws.size() - 1)];
    };
    if (!draws.empty()) {
      row.ci_low_pp = pick(alpha);
      row.ci_high_pp = pick(1.0 - alpha);
    }
    out.push_back(std::move(row));
  }
  return out;
}

double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw MetricError("slope needs at least two points");
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0) throw MetricError("slope undefined: all x equal");
  return sxy / sxx;
}

DepthSlope depth_slope(const std::vector<EvalRecord>& records) {
  std::map<int, Tally> q;
  for (const auto& r : records) q[r.quintile].add(r.verdict);
  DepthSlope out;
  std::vector<double> x, y;
  for (const auto& [quint, t] : q) {
    if (t.graded() == 0) continue;
    double pp = 100.0 * rate_of(t);
    out.rate_pp[quint] = pp;
    x.push_back(quint);
    y.push_back(pp);
  }
  if (x.size() < 2) throw MetricError("depth slope needs graded records in at least two quintiles");
  out.slope_pp = ols_slope(x, y);
  return out;
}

std::vector<ModelCellRate> model_cell_rates(const std::vector<EvalRecord>& records) {
  std::vector<ModelCellRate> out;
  for (const auto& row : hallucination_rate(records, {"model", "level", "serializer"})) {
    out.push_back({row.key[0], row.key[1], row.key[2], row.rate});
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> hard_subset(const std::vector<ModelCellRate>& table, int model_threshold,
                                                             double rate_threshold) {
  std::set<std::string> models;
  for (const auto& c : table) models.insert(c.model);
  if (static_cast<int>(models.size()) < model_threshold) {
    throw MetricError(fmt::format("rate table covers {} models, fewer than the threshold {}", models.size(),
                                  model_threshold));
  }
  std::map<std::pair<std::string, std::string>, std::set<std::string>> failing;
  for (const auto& c : table) {
    if (c.rate >= rate_threshold) failing[{c.level, c.serializer}].insert(c.model);
  }
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [cell, who] : failing) {
    if (static_cast<int>(who.size()) >= model_threshold) out.push_back(cell);
  }
  return out;
}

std::vector<WorldComparison> serializer_comparison(const std::vector<EvalRecord>& records) {
  // level -> serializer -> (model, episode) -> tally
  std::map<std::string, std::map<std::string, std::map<std::pair<std::string, std::string>, Tally>>> tree;
  for (const auto& r : records) {
    tree[r.level][std::string(to_string(r.serializer))][{r.model_id, r.episode}].add(r.verdict);
  }
  std::vector<WorldComparison> out;
  for (const auto& [level, sers] : tree) {
    WorldComparison w;
    w.level = level;
    for (const auto& [ser, traces] : sers) {
      double sum = 0;
      std::size_t n = 0;
      for (const auto& [trace, t] : traces) {
        if (t.graded() == 0) continue;
        sum += rate_of(t);
        ++n;
      }
      if (n == 0) continue;
      w.serializer_rate[ser] = sum / static_cast<double>(n);
      w.traces[ser] = n;
    }
    if (w.serializer_rate.size() < 2) continue;
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& [ser, rate] : w.serializer_rate) ranked.emplace_back(rate, ser);
    std::sort(ranked.begin(), ranked.end());
    w.margin_pp = 100.0 * (ranked[1].first - ranked[0].first);
    w.winner = ranked[1].first == ranked[0].first ? "tie" : ranked[0].second;
    out.push_back(std::move(w));
  }
  if (out.empty()) throw MetricError("no world has graded records under two or more serializers");
  return out;
}

}  // namespace refgrid
