#ifndef ALRANK_SYNTHETIC_HPP
#define ALRANK_SYNTHETIC_HPP

#include <cstdint>

#include "alrank/datamodel.hpp"

namespace alrank {

/// Shape of a planted-topic collection.
///
/// Every topic owns a private vocabulary. Queries are 2-4 distinct words of
/// their topic. Each query gets `rel_per_query` planted relevant documents
/// drawn from its topic's documents; those contain some of the query's words
/// and at least three topic words in total, mixed with noise words. All other
/// documents contain noise words and, with probability `distractor_rate`, one
/// or two words of a different topic.
struct SyntheticSpec {
  int topics = 20;
  int docs_per_topic = 100;
  int noise_vocab = 400;
  int topic_vocab = 30;
  int queries_per_topic = 20;
  int test_queries_per_topic = 5;
  int rel_per_query = 2;
  int noise_tokens_per_doc = 12;
  double distractor_rate = 0.5;

  /// Throws if the spec is inconsistent.
  void validate() const;
};

struct SyntheticBundle {
  Corpus corpus;
  QuerySet train;
  QuerySet test;
  Qrels qrels;
};

/// Pure function of (spec, seed).
SyntheticBundle generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace alrank

#endif  // ALRANK_SYNTHETIC_HPP
