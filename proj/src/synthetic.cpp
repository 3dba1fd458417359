#include "alrank/synthetic.hpp"

#include <algorithm>
#include <set>

namespace alrank {

namespace {

std::string padded(char prefix, int value, int width) {
  std::string digits = std::to_string(value);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

std::string topic_word(int topic, int j) {
  return "t" + std::to_string(topic) + "x" + std::to_string(j);
}

std::string noise_word(int j) { return "w" + std::to_string(j); }

}  // namespace

void SyntheticSpec::validate() const {
  if (topics < 1) throw Error("synthetic: topics must be >= 1");
  if (docs_per_topic < 1) throw Error("synthetic: docs_per_topic must be >= 1");
  if (topic_vocab < 4) throw Error("synthetic: topic_vocab must be >= 4");
  if (noise_vocab < 1) throw Error("synthetic: noise_vocab must be >= 1");
  if (queries_per_topic < 1) throw Error("synthetic: queries_per_topic must be >= 1");
  if (test_queries_per_topic < 0 || test_queries_per_topic > queries_per_topic)
    throw Error("synthetic: test_queries_per_topic must be in [0, queries_per_topic]");
  if (rel_per_query < 1) throw Error("synthetic: rel_per_query must be >= 1");
  if (rel_per_query > docs_per_topic)
    throw Error("synthetic: rel_per_query (" + std::to_string(rel_per_query) +
                ") exceeds docs_per_topic (" + std::to_string(docs_per_topic) + ")");
  if (noise_tokens_per_doc < 0) throw Error("synthetic: noise_tokens_per_doc must be >= 0");
  if (distractor_rate < 0 || distractor_rate > 1)
    throw Error("synthetic: distractor_rate must be in [0, 1]");
}

SyntheticBundle generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, "synthetic"));
  const int n_docs = spec.topics * spec.docs_per_topic;
  const int doc_width = std::max(5, static_cast<int>(std::to_string(n_docs).size()));
  const int n_queries = spec.topics * spec.queries_per_topic;
  const int query_width = std::max(4, static_cast<int>(std::to_string(n_queries).size()));

  struct PlannedQuery {
    int topic;
    std::vector<int> words;
    std::vector<int> relevant;  // global doc ordinals
  };
  std::vector<PlannedQuery> queries;
  // Query-word sets planted into each relevant document.
  std::vector<std::vector<const PlannedQuery*>> relevant_to(n_docs);
  queries.reserve(n_queries);

  for (int t = 0; t < spec.topics; ++t) {
    for (int j = 0; j < spec.queries_per_topic; ++j) {
      PlannedQuery q;
      q.topic = t;
      const std::size_t len = 2 + uniform_index(rng, 3);
      for (auto w : sample_without_replacement(rng, spec.topic_vocab, len)) q.words.push_back(static_cast<int>(w));
      for (auto d : sample_without_replacement(rng, spec.docs_per_topic, spec.rel_per_query))
        q.relevant.push_back(t * spec.docs_per_topic + static_cast<int>(d));
      std::sort(q.relevant.begin(), q.relevant.end());
      queries.push_back(std::move(q));
    }
  }
  for (const auto& q : queries)
    for (int d : q.relevant) relevant_to[d].push_back(&q);

  SyntheticBundle out{Corpus{}, QuerySet{}, QuerySet{}, Qrels(1)};
  for (int d = 0; d < n_docs; ++d) {
    const int topic = d / spec.docs_per_topic;
    std::vector<std::string> tokens;
    for (int k = 0; k < spec.noise_tokens_per_doc; ++k)
      tokens.push_back(noise_word(static_cast<int>(uniform_index(rng, spec.noise_vocab))));
    if (!relevant_to[d].empty()) {
      int topic_tokens = 0;
      for (const PlannedQuery* q : relevant_to[d]) {
        // At least one query word; the rest each with probability 0.6.
        const std::size_t anchor = uniform_index(rng, q->words.size());
        for (std::size_t w = 0; w < q->words.size(); ++w) {
          if (w == anchor || uniform_unit(rng) < 0.6) {
            tokens.push_back(topic_word(topic, q->words[w]));
            ++topic_tokens;
          }
        }
      }
      const int extra = std::max(1, 3 - topic_tokens) + static_cast<int>(uniform_index(rng, 2));
      for (int k = 0; k < extra; ++k)
        tokens.push_back(topic_word(topic, static_cast<int>(uniform_index(rng, spec.topic_vocab))));
    } else if (spec.topics > 1 && uniform_unit(rng) < spec.distractor_rate) {
      int other = static_cast<int>(uniform_index(rng, spec.topics - 1));
      if (other >= topic) ++other;
      const int count = 1 + static_cast<int>(uniform_index(rng, 2));
      for (int k = 0; k < count; ++k)
        tokens.push_back(topic_word(other, static_cast<int>(uniform_index(rng, spec.topic_vocab))));
    }
    shuffle(tokens, rng);
    std::string text;
    for (const auto& tok : tokens) {
      if (!text.empty()) text += ' ';
      text += tok;
    }
    out.corpus.add(DocumentId{padded('d', d, doc_width)}, std::move(text));
  }

  const int train_per_topic = spec.queries_per_topic - spec.test_queries_per_topic;
  for (int i = 0; i < n_queries; ++i) {
    const auto& q = queries[i];
    std::string text;
    for (int w : q.words) {
      if (!text.empty()) text += ' ';
      text += topic_word(q.topic, w);
    }
    QueryId qid{padded('q', i, query_width)};
    for (int d : q.relevant) out.qrels.add(qid, out.corpus[d].id, 1);
    const bool is_test = (i % spec.queries_per_topic) >= train_per_topic;
    (is_test ? out.test : out.train).add(qid, std::move(text));
  }
  return out;
}

}  // namespace alrank
