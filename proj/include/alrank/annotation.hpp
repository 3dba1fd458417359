#ifndef ALRANK_ANNOTATION_HPP
#define ALRANK_ANNOTATION_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alrank/datamodel.hpp"

namespace alrank {

/// Result of walking a ranking top-down until the first relevant document.
struct FirstRelevant {
  std::optional<std::size_t> rank;  // 1-based; empty when exhausted
  std::optional<DocumentId> doc;
  std::size_t examined = 0;  // positions looked at

  bool found() const { return rank.has_value(); }
};

FirstRelevant first_relevant(const RankedList& ranked, const Qrels& qrels, std::size_t depth);

enum class Outcome { triplet, skipped };
std::string to_string(Outcome o);
Outcome parse_outcome(std::string_view s);

struct AnnotationResult {
  QueryId query;
  Outcome outcome = Outcome::skipped;
  std::optional<TrainingTriplet> triplet;
  std::size_t assessments = 0;
  std::optional<std::size_t> positive_rank;  // rank of the walked-to positive, if any
  std::size_t depth_examined = 0;

  friend bool operator==(const AnnotationResult&, const AnnotationResult&) = default;
};

struct AnnotatorOptions {
  std::size_t positive_depth = 100;
  /// Exclude every judged-relevant document from negative sampling, not just
  /// the positive.
  bool exclude_relevant_negatives = true;
};

/// Uniform draw from the negative candidates, skipping `positive` and, when
/// configured, all judged-relevant documents. Throws if none are eligible.
DocumentId sample_negative(const QueryId& query, const DocumentId& positive, const RankedList& negative_pool,
                           const Qrels& qrels, Rng& rng, const AnnotatorOptions& opts = {});

/// Query-level annotation: the positive is the first relevant document of the
/// ranking; assessments equal its rank. Exhausted walks are skipped and cost
/// the examined depth.
AnnotationResult annotate_query(const QueryId& query, const RankedList& ranking, const RankedList& negative_pool,
                                const Qrels& qrels, Rng& rng, const AnnotatorOptions& opts = {});

/// Pair-level annotation for uncertainty selection. A relevant selected
/// document becomes the positive (1 assessment). An irrelevant one becomes
/// the negative and the positive comes from the ranking walk
/// (1 + rank assessments; 1 + examined when exhausted).
AnnotationResult annotate_pair(const QueryId& query, const DocumentId& selected, const Qrels& qrels,
                               const RankedList& ranking, const RankedList& negative_pool, Rng& rng,
                               const AnnotatorOptions& opts = {});

struct LedgerRow {
  int iteration;
  AnnotationResult result;
  friend bool operator==(const LedgerRow&, const LedgerRow&) = default;
};

/// Cumulative assessment counts A(i) with the per-query rows behind them.
class AssessmentLedger {
 public:
  /// Iterations must be appended in order 1, 2, ...
  void record(int iteration, std::span<const AnnotationResult> results);

  int iterations() const { return static_cast<int>(per_iteration_.size()); }
  /// A(i); A(0) = 0.
  std::uint64_t cumulative(int iteration) const;
  std::uint64_t at_iteration(int iteration) const;
  const std::vector<std::uint64_t>& per_iteration() const { return per_iteration_; }
  const std::vector<LedgerRow>& rows() const { return rows_; }

  /// Columns: iteration,query,outcome,assessments,positive,negative
  std::string to_csv() const;
  static AssessmentLedger from_csv(const std::string& content, const std::string& source = "<memory>");

  friend bool operator==(const AssessmentLedger&, const AssessmentLedger&) = default;

 private:
  std::vector<std::uint64_t> per_iteration_;
  std::vector<std::uint64_t> cumulative_;
  std::vector<LedgerRow> rows_;
};

}  // namespace alrank

#endif  // ALRANK_ANNOTATION_HPP
