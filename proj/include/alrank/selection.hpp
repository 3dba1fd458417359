#ifndef ALRANK_SELECTION_HPP
#define ALRANK_SELECTION_HPP

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alrank/datamodel.hpp"
#include "alrank/ranker.hpp"

namespace alrank {

enum class Strategy { random, uncertainty, qbc, diversity };

std::string to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

struct SelectionConfig {
  Strategy strategy = Strategy::random;
  int batch_size = 20;             // s, per iteration when no schedule is given
  int candidate_depth = 100;       // K
  int committee_size = 2;          // |M|
  double member_fraction = 0.8;
  int entropy_pair_depth = 0;      // K_pairs; 0 means "same as K"
  int kmeans_max_iters = 100;
  bool one_pair_per_query = false;  // uncertainty only

  void validate() const;
  int pair_depth() const { return entropy_pair_depth > 0 ? entropy_pair_depth : candidate_depth; }
};

/// Uniform sample without replacement of min(s, |pool|) queries.
std::vector<QueryId> select_random(std::span<const QueryId> pool, std::size_t s, Rng& rng);

// ---- uncertainty ------------------------------------------------------------

struct ScoredPair {
  QueryId query;
  DocumentId doc;
  double score;
  friend bool operator==(const ScoredPair&, const ScoredPair&) = default;
};

struct UncertaintySelection {
  double mean = 0;
  std::vector<ScoredPair> pairs;  // selected, closest to the mean first
};

/// Picks the s pairs whose score is closest to the global mean of all scores.
/// Ties: (|score - mean|, query, doc) ascending.
UncertaintySelection select_uncertain_pairs(std::span<const ScoredPair> scored, std::size_t s,
                                            bool one_per_query = false);

/// Scores the top-K candidates of every pool query with the ranker, then
/// applies select_uncertain_pairs.
UncertaintySelection select_uncertainty(const RankerState& ranker, std::span<const QueryId> pool,
                                        const Run& candidates, const QuerySet& queries, const Corpus& corpus,
                                        std::size_t depth, std::size_t s, bool one_per_query = false);

// ---- query by committee -----------------------------------------------------

/// Vote entropy over ordered pairs drawn from the first member's top
/// `pair_depth` documents; natural log, 0 ln 0 = 0.
double vote_entropy(std::span<const RankedList> members, std::size_t pair_depth);

struct ScoredQuery {
  QueryId query;
  double score;
  friend bool operator==(const ScoredQuery&, const ScoredQuery&) = default;
};

/// Top s by score descending, ties by query id ascending.
std::vector<ScoredQuery> top_by_score(std::vector<ScoredQuery> scored, std::size_t s);

/// Every member reranks each pool query's top-K candidates; queries are
/// ranked by vote entropy.
std::vector<ScoredQuery> select_qbc(std::span<const RankerState> committee, std::span<const QueryId> pool,
                                    const Run& candidates, const QuerySet& queries, const Corpus& corpus,
                                    std::size_t depth, std::size_t pair_depth, std::size_t s);

// ---- diversity --------------------------------------------------------------

struct KMeansResult {
  std::vector<std::size_t> assignment;       // cluster per point
  std::vector<std::vector<double>> centroids;
  std::vector<double> objective_history;     // after each Lloyd update
  int iterations = 0;

  double objective() const { return objective_history.empty() ? 0.0 : objective_history.back(); }
};

/// k-means++ seeding then Lloyd iterations on squared Euclidean distance.
/// Empty clusters are refilled with the point farthest from its centroid,
/// so every cluster is non-empty on return.
KMeansResult kmeans(std::span<const std::vector<double>> points, std::size_t k, int max_iters, Rng& rng);

/// Clusters the ranker's query encodings into s clusters and draws one query
/// uniformly from each.
std::vector<QueryId> select_diversity(const RankerState& ranker, std::span<const QueryId> pool,
                                      const QuerySet& queries, std::size_t s, int max_iters, Rng& rng);

}  // namespace alrank

#endif  // ALRANK_SELECTION_HPP
