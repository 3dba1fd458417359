#ifndef ALRANK_BUDGET_HPP
#define ALRANK_BUDGET_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "alrank/selection.hpp"

namespace alrank {

/// Rates for the annotation + compute cost model. Currency is unitless; the
/// defaults are US$ figures (p3.2xlarge / a1.4xlarge on-demand, a domain
/// expert at 50/h assessing 75 pairs per hour).
struct CostConfig {
  double assessments_per_hour = 75.0;  // A_h
  double annotator_cost_per_hour = 50.0;  // A_C
  double gpu_cost_per_hour = 3.060;  // G_h
  double cpu_cost_per_hour = 0.408;  // C_h
  /// Selection compute hours per iteration (H_CPU), per strategy.
  std::map<Strategy, double> selection_hours{
      {Strategy::random, 0.0}, {Strategy::uncertainty, 1.0}, {Strategy::qbc, 2.0}, {Strategy::diversity, 0.5}};
  /// Use the mean measured selection time instead of the constant.
  bool measured_selection_hours = false;
  /// Training hours are either measured wall-clock or this constant times the
  /// number of triplet passes (|D| x epochs), which keeps reports reproducible.
  bool measured_training_hours = false;
  double training_hours_per_triplet_epoch = 1e-5;

  void validate() const;
  double selection_hours_for(Strategy s) const;
};

/// C_A(i) = A(i) / A_h * A_C
double annotation_cost(std::uint64_t assessments, const CostConfig& config);

/// C_C(i) = H_GPU(i) * G_h + H_CPU * C_h * (i - 1). Requires i >= 1.
double compute_cost(double gpu_hours, int iteration, double cpu_hours, const CostConfig& config);

/// Per-iteration hours. Training hours accumulate into H_GPU(i).
class TimeLedger {
 public:
  void record(double training_hours, double selection_hours);
  int iterations() const { return static_cast<int>(training_.size()); }
  /// H_GPU(i), cumulative training hours through iteration i.
  double gpu_hours(int iteration) const;
  const std::vector<double>& training_hours() const { return training_; }
  const std::vector<double>& selection_hours() const { return selection_; }
  double mean_selection_hours() const;

  friend bool operator==(const TimeLedger&, const TimeLedger&) = default;

 private:
  std::vector<double> training_;
  std::vector<double> selection_;
};

struct CostRow {
  int iteration;
  std::uint64_t assessments;  // A(i), cumulative
  double annotation;          // C_A(i)
  double compute;             // C_C(i)
  double total;               // C(i)
  friend bool operator==(const CostRow&, const CostRow&) = default;
};

struct CostReport {
  std::vector<CostRow> rows;
  std::string to_csv() const;
  friend bool operator==(const CostReport&, const CostReport&) = default;
};

/// C(i) = C_A(i) + C_C(i) for every iteration. `cumulative_assessments[i-1]`
/// is A(i). Throws when the ledgers have different lengths.
CostReport total_cost(const std::vector<std::uint64_t>& cumulative_assessments, const TimeLedger& time,
                      Strategy strategy, const CostConfig& config);

/// Reads `key = value` or a flat JSON object. Unknown keys are an error.
CostConfig parse_cost_config(const std::string& content, const std::string& source = "<memory>");
std::string cost_config_to_json(const CostConfig& config);
/// Sets one key as accepted by parse_cost_config.
void set_cost_option(CostConfig& config, const std::string& key, const std::string& value);

}  // namespace alrank

#endif  // ALRANK_BUDGET_HPP
