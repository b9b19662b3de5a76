#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "refgrid/eval.hpp"

namespace refgrid {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Record field used for grouping: model, category, serializer, level, quintile,
/// protocol, probe_type, trajectory, episode.
std::string group_value(const EvalRecord& r, const std::string& field);
/// "category,serializer" -> {"category", "serializer"}; validates names.
std::vector<std::string> parse_group_by(const std::string& csv);

struct Tally {
  long correct = 0;
  long hallucinated = 0;
  long unparseable = 0;
  long transport_failure = 0;
  long graded() const { return correct + hallucinated; }
  void add(Verdict v);
};

struct RateRow {
  std::vector<std::string> key;
  Tally tally;
  double rate = 0;  // hallucinated / graded, in [0, 1]
};

/// One row per group with at least one graded record, sorted by key. Groups
/// holding only unparseable or transport failures are absent.
std::vector<RateRow> hallucination_rate(const std::vector<EvalRecord>& records, const std::vector<std::string>& group_by);
/// Micro-averaged rate over all graded records. Throws when none are graded.
double pooled_rate(const std::vector<EvalRecord>& records);

struct BootstrapConfig {
  int draws = 10000;
  std::uint64_t seed = 0x5eed'2024ULL;
  double confidence = 0.95;
};

struct NavEffRow {
  std::vector<std::string> key;
  double ctrl_rate = 0;
  double innav_rate = 0;
  double naveff_pp = 0;  // 100 * (innav - ctrl)
  double ci_low_pp = 0;
  double ci_high_pp = 0;
  std::size_t episodes = 0;
  std::size_t pairs = 0;
};

/// InNav minus CtrlStatic per group with a paired bootstrap over episodes.
/// Throws MetricError unless every (model, trajectory, probe, serializer) has
/// exactly one record under each protocol.
std::vector<NavEffRow> nav_effect(const std::vector<EvalRecord>& records, const std::vector<std::string>& group_by = {"model"},
                                  const BootstrapConfig& config = {});

/// Ordinary least squares slope of y on x.
double ols_slope(const std::vector<double>& x, const std::vector<double>& y);

struct DepthSlope {
  std::map<int, double> rate_pp;  // quintile -> pooled rate in percentage points
  double slope_pp = 0;
};

/// Pooled rate per quintile and the OLS slope across quintiles. Throws when
/// fewer than two quintiles have graded records.
DepthSlope depth_slope(const std::vector<EvalRecord>& records);

struct ModelCellRate {
  std::string model;
  std::string level;
  std::string serializer;
  double rate = 0;
};

std::vector<ModelCellRate> model_cell_rates(const std::vector<EvalRecord>& records);

/// (level, serializer) pairs on which at least `model_threshold` models reach
/// `rate_threshold`, sorted.
std::vector<std::pair<std::string, std::string>> hard_subset(const std::vector<ModelCellRate>& table, int model_threshold = 5,
                                                             double rate_threshold = 0.20);

struct WorldComparison {
  std::string level;
  std::map<std::string, double> serializer_rate;  // mean of per-trace rates
  std::map<std::string, std::size_t> traces;
  std::string winner;  // lowest rate; "tie" when the top two are equal
  double margin_pp = 0;
};

/// Probe -> trace (model, episode) -> world -> serializer. Each trace weighs
/// the same regardless of its probe count.
std::vector<WorldComparison> serializer_comparison(const std::vector<EvalRecord>& records);

}  // namespace refgrid
