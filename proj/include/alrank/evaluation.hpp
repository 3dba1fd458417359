#ifndef ALRANK_EVALUATION_HPP
#define ALRANK_EVALUATION_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alrank/budget.hpp"
#include "alrank/datamodel.hpp"

namespace alrank {

enum class Gain { linear, exponential };

struct MetricResult {
  std::map<QueryId, double> per_query;
  double mean = 0;
  std::size_t k = 10;

  std::size_t count() const { return per_query.size(); }
  friend bool operator==(const MetricResult&, const MetricResult&) = default;
};

/// nDCG@k with grade (or 2^grade - 1) gains and log2(rank + 1) discounts.
/// Unjudged documents gain 0. Queries without a positive grade are skipped.
MetricResult ndcg_at_k(const Run& run, const Qrels& qrels, std::size_t k = 10, Gain gain = Gain::linear);

/// nDCG@k of a single ranking; nullopt when the query has no positive grade.
std::optional<double> ndcg_of(const RankedList& ranking, const Qrels& qrels, std::size_t k, Gain gain);

struct SignificanceResult {
  double t = 0;
  double p = 1;
  std::size_t df = 0;
  double alpha = 0.05;
  double corrected_alpha = 0.05;
  std::size_t comparisons = 1;
  bool significant = false;
};

/// Two-sided paired t-test on a - b, Bonferroni-corrected for n comparisons.
/// All-zero differences give t = 0, p = 1.
SignificanceResult paired_ttest(std::span<const double> a, std::span<const double> b, double alpha = 0.05,
                                std::size_t comparisons = 1);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// P(|T| >= |t|) for Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

// ---- report emission ----------------------------------------------------------

struct IterationOutcome {
  int iteration = 0;
  std::size_t train_size = 0;  // |D|
  MetricResult metric;
  CostRow cost;
  friend bool operator==(const IterationOutcome&, const IterationOutcome&) = default;
};

/// One strategy run (a random-baseline repeat counts as its own curve).
struct StrategyCurve {
  std::string strategy;
  int repeat = 0;
  std::uint64_t seed = 0;
  std::vector<IterationOutcome> iterations;
};

struct VariabilityRecord {
  std::size_t size = 0;
  int repeat = 0;
  std::uint64_t seed = 0;
  double ndcg = 0;
  friend bool operator==(const VariabilityRecord&, const VariabilityRecord&) = default;
};

struct ReportInputs {
  std::vector<StrategyCurve> curves;
  std::vector<VariabilityRecord> variability;
  std::optional<MetricResult> bm25;
  std::optional<MetricResult> untrained;
  double alpha = 0.05;
  std::size_t comparisons = 3;
};

/// Writes into `out_dir`:
///   al_results.csv              strategy,seed,iteration,train_size,ndcg10,assessments,C_A,C_C,C_total
///   fig_cost_stacked.csv        strategy,seed,iteration,train_size,ndcg10,C_A,C_C
///   fig_ndcg_vs_assessments.csv strategy,seed,iteration,assessments,ndcg10
///   variability.csv             strategy,size,seed,ndcg10
///   summary.md                  strategies x iterations table of mean nDCG@10
/// Returns the written paths.
std::vector<std::filesystem::path> emit_reports(const ReportInputs& inputs, const std::filesystem::path& out_dir);

/// The summary table alone. Random repeats are averaged per query; each active
/// strategy is tested against that average and marked with '*' when
/// significant after Bonferroni correction.
std::string summary_table(const ReportInputs& inputs);

}  // namespace alrank

#endif  // ALRANK_EVALUATION_HPP
