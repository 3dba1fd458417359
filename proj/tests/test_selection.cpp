#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "alrank/lexical.hpp"
#include "alrank/selection.hpp"
#include "alrank/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace alrank;

namespace {

std::vector<QueryId> ids(std::initializer_list<const char*> names) {
  std::vector<QueryId> out;
  for (auto n : names) out.emplace_back(n);
  return out;
}

RankedList ranking(std::vector<std::string> order) {
  std::vector<ScoredDocument> items;
  for (std::size_t i = 0; i < order.size(); ++i)
    items.push_back({DocumentId(order[i]), static_cast<double>(order.size() - i)});
  return RankedList(QueryId("q"), items);
}

std::vector<std::string> names(const RankedList& l) {
  std::vector<std::string> out;
  for (const auto& d : l.documents()) out.push_back(d.str());
  return out;
}

/// A pool of queries with BM25 candidates over a random corpus.
struct PoolFixture {
  Corpus corpus;
  QuerySet queries;
  std::vector<QueryId> pool;
  Run candidates;

  PoolFixture(Rng& rng, std::size_t n_queries, std::size_t n_docs) {
    for (std::size_t d = 0; d < n_docs; ++d)
      corpus.add(DocumentId("d" + std::to_string(d)), "u" + std::to_string(d) + " " +
                                                           alrank::testing::random_text(rng, 12, 2, 8));
    const auto index = build_index(corpus);
    for (std::size_t q = 0; q < n_queries; ++q) {
      QueryId id("q" + std::to_string(q));
      queries.add(id, alrank::testing::random_text(rng, 12, 1, 3));
      pool.push_back(id);
    }
    candidates = retrieve_all(index, queries, 100);
  }
};

}  // namespace

TEST_CASE("strategy names and config validation") {
  for (auto s : {Strategy::random, Strategy::uncertainty, Strategy::qbc, Strategy::diversity})
    CHECK(parse_strategy(to_string(s)) == s);
  CHECK_THROWS_AS(parse_strategy("greedy"), Error);
  SelectionConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.pair_depth() == 100);
  c.committee_size = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = SelectionConfig{};
  c.entropy_pair_depth = 1;
  CHECK_THROWS_AS(c.validate(), Error);
}

// ---- random -----------------------------------------------------------------

TEST_CASE("random selection") {
  const auto pool = ids({"a", "b", "c"});
  Rng rng(1);
  auto all = select_random(pool, 5, rng);
  std::sort(all.begin(), all.end());
  CHECK(all == pool);

  Rng r1(7), r2(7);
  CHECK(select_random(pool, 2, r1) == select_random(pool, 2, r2));
  CHECK_THROWS_AS(select_random(std::vector<QueryId>{}, 1, rng), Error);
  CHECK_THROWS_AS(select_random(pool, 0, rng), Error);
}

TEST_CASE("random selection is uniform") {
  const auto pool = ids({"a", "b", "c"});
  Rng rng(2024);
  std::map<QueryId, int> counts;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) ++counts[select_random(pool, 1, rng)[0]];
  for (const auto& q : pool) CHECK(std::abs(counts[q] / static_cast<double>(trials) - 1.0 / 3) <= 0.02);
}

// ---- uncertainty --------------------------------------------------------------

TEST_CASE("uncertainty picks the pair at the mean") {
  std::vector<ScoredPair> s{{QueryId("q1"), DocumentId("p1"), 0.1},
                            {QueryId("q1"), DocumentId("p2"), 0.5},
                            {QueryId("q2"), DocumentId("p1"), 0.9}};
  const auto r = select_uncertain_pairs(s, 1);
  CHECK(r.mean == doctest::Approx(0.5));
  REQUIRE(r.pairs.size() == 1);
  CHECK(r.pairs[0].query.str() == "q1");
  CHECK(r.pairs[0].doc.str() == "p2");
}

TEST_CASE("uncertainty ties follow query then document order") {
  std::vector<ScoredPair> s{{QueryId("q2"), DocumentId("a"), 1.0},
                            {QueryId("q1"), DocumentId("b"), 1.0},
                            {QueryId("q1"), DocumentId("a"), 1.0}};
  const auto r = select_uncertain_pairs(s, 2);
  REQUIRE(r.pairs.size() == 2);
  CHECK(r.pairs[0].doc.str() == "a");
  CHECK(r.pairs[0].query.str() == "q1");
  CHECK(r.pairs[1].doc.str() == "b");
  CHECK_THROWS_AS(select_uncertain_pairs(std::vector<ScoredPair>{}, 1), Error);
}

TEST_CASE("uncertainty matches the exhaustive oracle") {
  Rng rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredPair> pairs;
    std::set<std::pair<int, int>> seen;
    while (pairs.size() < 50) {
      const int q = static_cast<int>(uniform_index(rng, 8)), d = static_cast<int>(uniform_index(rng, 20));
      if (!seen.insert({q, d}).second) continue;
      // Coarse scores force many ties.
      pairs.push_back({QueryId("q" + std::to_string(q)), DocumentId("d" + std::to_string(d)),
                       static_cast<double>(uniform_index(rng, 9)) / 4.0});
    }
    const auto got = select_uncertain_pairs(pairs, 5).pairs;
    CHECK(got == alrank::testing::brute_force_uncertainty(pairs, 5));
    shuffle(pairs, rng);
    CHECK(select_uncertain_pairs(pairs, 5).pairs == got);
  }
}

TEST_CASE("one pair per query") {
  std::vector<ScoredPair> s{{QueryId("q1"), DocumentId("a"), 0.5},
                            {QueryId("q1"), DocumentId("b"), 0.5},
                            {QueryId("q2"), DocumentId("a"), 0.0},
                            {QueryId("q3"), DocumentId("a"), 1.0}};
  const auto r = select_uncertain_pairs(s, 2, true);
  REQUIRE(r.pairs.size() == 2);
  CHECK(r.pairs[0].query.str() == "q1");
  CHECK(r.pairs[1].query.str() != "q1");
}

TEST_CASE("uncertainty selection over a pool is order-invariant and stays in the pool") {
  Rng rng(61);
  PoolFixture f(rng, 15, 60);
  RankerConfig c;
  c.dim = 32;
  const auto ranker = initialize_ranker(c, 3);
  std::vector<QueryId> sub(f.pool.begin(), f.pool.begin() + 10);
  const auto a = select_uncertainty(ranker, sub, f.candidates, f.queries, f.corpus, 5, 6);
  CHECK(a.pairs.size() == 6);
  std::set<std::pair<QueryId, DocumentId>> uniq;
  for (const auto& p : a.pairs) {
    CHECK(std::find(sub.begin(), sub.end(), p.query) != sub.end());
    const auto& cands = f.candidates.lists.at(p.query).truncated(5).documents();
    CHECK(std::find(cands.begin(), cands.end(), p.doc) != cands.end());
    CHECK(uniq.insert({p.query, p.doc}).second);
  }
  auto reversed = sub;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(select_uncertainty(ranker, reversed, f.candidates, f.queries, f.corpus, 5, 6).pairs == a.pairs);
  set_thread_count(4);
  CHECK(select_uncertainty(ranker, sub, f.candidates, f.queries, f.corpus, 5, 6).pairs == a.pairs);
  set_thread_count(1);
}

// ---- vote entropy -------------------------------------------------------------

TEST_CASE("vote entropy examples") {
  std::vector<RankedList> agree{ranking({"a", "b"}), ranking({"a", "b"})};
  CHECK(vote_entropy(agree, 2) == 0.0);
  std::vector<RankedList> disagree{ranking({"a", "b"}), ranking({"b", "a"})};
  CHECK(vote_entropy(disagree, 2) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  std::vector<RankedList> one{ranking({"a", "b"})};
  CHECK_THROWS_AS(vote_entropy(one, 2), Error);
  CHECK_THROWS_AS(vote_entropy(agree, 1), Error);
  std::vector<RankedList> mismatch{ranking({"a", "b"}), ranking({"a", "c"})};
  CHECK_THROWS_AS(vote_entropy(mismatch, 2), Error);
}

TEST_CASE("vote entropy matches pair counting on random rankings") {
  Rng rng(71);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t members = 2 + uniform_index(rng, 3);
    const std::size_t cands = 2 + uniform_index(rng, 6);
    std::vector<std::string> docs;
    for (std::size_t i = 0; i < cands; ++i) docs.push_back("p" + std::to_string(i));
    std::vector<RankedList> lists;
    std::vector<std::vector<std::string>> orders;
    for (std::size_t m = 0; m < members; ++m) {
      auto order = docs;
      shuffle(order, rng);
      lists.push_back(ranking(order));
      orders.push_back(order);
    }
    const std::size_t depth = 2 + uniform_index(rng, cands);
    const double ve = vote_entropy(lists, depth);
    CHECK(ve >= 0.0);
    CHECK(ve == doctest::Approx(alrank::testing::pair_counting_vote_entropy(orders, depth)).epsilon(1e-12));

    // Complement pairs split the committee.
    for (std::size_t i = 0; i < cands; ++i)
      for (std::size_t j = i + 1; j < cands; ++j) {
        std::size_t ij = 0, ji = 0;
        for (const auto& o : orders) {
          const auto pi = std::find(o.begin(), o.end(), docs[i]) - o.begin();
          const auto pj = std::find(o.begin(), o.end(), docs[j]) - o.begin();
          (pi < pj ? ij : ji)++;
        }
        CHECK(ij + ji == members);
      }

    // Zero exactly when every member agrees.
    bool all_same = true;
    for (const auto& o : orders) all_same &= o == orders[0];
    if (all_same) CHECK(ve == 0.0);
  }
  // A four-candidate, three-member instance.
  std::vector<std::vector<std::string>> orders{{"a", "b", "c", "d"}, {"b", "a", "d", "c"}, {"d", "c", "a", "b"}};
  std::vector<RankedList> lists;
  for (const auto& o : orders) lists.push_back(ranking(o));
  CHECK(vote_entropy(lists, 4) == doctest::Approx(alrank::testing::pair_counting_vote_entropy(orders, 4)));
}

TEST_CASE("strictly increasing score transforms leave vote entropy unchanged") {
  Rng rng(73);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ScoredDocument> a, b;
    for (int i = 0; i < 6; ++i) {
      a.push_back({DocumentId("p" + std::to_string(i)), uniform_real(rng, -2, 2)});
      b.push_back({DocumentId("p" + std::to_string(i)), uniform_real(rng, -2, 2)});
    }
    std::vector<ScoredDocument> bt = b;
    for (auto& x : bt) x.score = std::exp(3 * x.score) + 1;
    std::vector<RankedList> before{RankedList(QueryId("q"), a), RankedList(QueryId("q"), b)};
    std::vector<RankedList> after{RankedList(QueryId("q"), a), RankedList(QueryId("q"), bt)};
    CHECK(vote_entropy(before, 6) == vote_entropy(after, 6));
  }
}

// ---- query by committee ---------------------------------------------------------

TEST_CASE("identical committee members select in query id order") {
  Rng rng(81);
  PoolFixture f(rng, 10, 40);
  RankerConfig c;
  c.dim = 32;
  const auto m = initialize_ranker(c, 1);
  std::vector<RankerState> committee{m, m};
  const auto sel = select_qbc(committee, f.pool, f.candidates, f.queries, f.corpus, 10, 10, 3);
  REQUIRE(sel.size() == 3);
  auto sorted = f.pool;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(sel[i].score == 0.0);
    CHECK(sel[i].query == sorted[i]);
  }
}

TEST_CASE("opposed committee members give every query maximal entropy") {
  Rng rng(83);
  PoolFixture f(rng, 8, 40);
  RankerConfig c;
  c.dim = 64;
  const auto m = initialize_ranker(c, 2);
  auto neg = m;
  for (auto& w : neg.weights) w = -w;
  std::vector<RankerState> committee{m, neg};
  const auto sel = select_qbc(committee, f.pool, f.candidates, f.queries, f.corpus, 5, 5, f.pool.size());
  for (const auto& sq : sel) {
    const double k = static_cast<double>(std::min<std::size_t>(5, f.candidates.lists.at(sq.query).size()));
    if (k < 2) continue;
    CHECK(sq.score == doctest::Approx(k * (k - 1) / 2 * std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("QBC equals a brute-force entropy ranking") {
  Rng rng(87);
  for (int trial = 0; trial < 10; ++trial) {
    PoolFixture f(rng, 10, 50);
    RankerConfig c;
    c.dim = 16;
    std::vector<RankerState> committee{initialize_ranker(c, 10 + trial), initialize_ranker(c, 20 + trial),
                                       initialize_ranker(c, 30 + trial)};
    const auto got = select_qbc(committee, f.pool, f.candidates, f.queries, f.corpus, 8, 8, 3);
    std::vector<std::pair<double, QueryId>> oracle;
    for (const auto& q : f.pool) {
      const auto cand = f.candidates.lists.at(q).truncated(8);
      double ve = 0;
      if (cand.size() >= 2) {
        std::vector<std::vector<std::string>> orders;
        for (const auto& m : committee) {
          std::vector<std::pair<double, std::string>> scored;
          for (const auto& item : cand.items())
            scored.emplace_back(score(m, f.queries.text(q), f.corpus.text(item.doc)), item.doc.str());
          std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
            return x.first != y.first ? x.first > y.first : x.second < y.second;
          });
          std::vector<std::string> order;
          for (const auto& s : scored) order.push_back(s.second);
          orders.push_back(order);
        }
        ve = alrank::testing::pair_counting_vote_entropy(orders, 8);
      }
      oracle.emplace_back(ve, q);
    }
    std::sort(oracle.begin(), oracle.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    REQUIRE(got.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(got[i].query == oracle[i].second);
      CHECK(got[i].score == doctest::Approx(oracle[i].first).epsilon(1e-12));
    }
  }
}

TEST_CASE("top_by_score") {
  std::vector<ScoredQuery> s{{QueryId("b"), 1.0}, {QueryId("a"), 1.0}, {QueryId("c"), 2.0}};
  const auto top = top_by_score(s, 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0].query.str() == "c");
  CHECK(top[1].query.str() == "a");
}

// ---- k-means and diversity --------------------------------------------------------

TEST_CASE("k-means separates obvious clusters") {
  std::vector<std::vector<double>> pts{{0}, {0.1}, {10}, {10.1}};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto r = kmeans(pts, 2, 100, rng);
    CHECK(r.assignment[0] == r.assignment[1]);
    CHECK(r.assignment[2] == r.assignment[3]);
    CHECK(r.assignment[0] != r.assignment[2]);
  }
}

TEST_CASE("k-means with one cluster per point") {
  Rng rng(3);
  std::vector<std::vector<double>> pts{{0, 1}, {2, 3}, {4, 5}, {-1, 7}};
  const auto r = kmeans(pts, 4, 100, rng);
  CHECK(std::set<std::size_t>(r.assignment.begin(), r.assignment.end()).size() == 4);
  CHECK(r.objective() == 0.0);
  CHECK_THROWS_AS(kmeans(pts, 5, 100, rng), Error);
  CHECK_THROWS_AS(kmeans(pts, 0, 100, rng), Error);
  std::vector<std::vector<double>> ragged{{0}, {1, 2}};
  CHECK_THROWS_AS(kmeans(ragged, 1, 10, rng), Error);
}

TEST_CASE("k-means objective never increases and every cluster is used") {
  Rng rng(97);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 40);
    const std::size_t dim = 1 + uniform_index(rng, 4);
    std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
    for (auto& p : pts)
      for (auto& x : p) x = static_cast<double>(uniform_index(rng, 5));  // duplicates on purpose
    const std::size_t k = 1 + uniform_index(rng, n);
    const auto r = kmeans(pts, k, 100, rng);
    for (std::size_t i = 1; i < r.objective_history.size(); ++i)
      CHECK(r.objective_history[i] <= r.objective_history[i - 1] + 1e-9);
    std::set<std::size_t> used(r.assignment.begin(), r.assignment.end());
    CHECK(used.size() == k);
  }
}

TEST_CASE("diversity selection") {
  QuerySet qs;
  std::vector<QueryId> pool;
  for (int i = 0; i < 6; ++i) {
    QueryId id("q" + std::to_string(i));
    qs.add(id, "same words");
    pool.push_back(id);
  }
  RankerConfig c;
  c.architecture = Architecture::bi;
  c.dim = 8;
  c.vocab_buckets = 32;
  const auto ranker = initialize_ranker(c, 1);
  Rng rng(5);
  // Identical embeddings: repair still yields distinct queries.
  const auto sel = select_diversity(ranker, pool, qs, 4, 100, rng);
  CHECK(std::set<QueryId>(sel.begin(), sel.end()).size() == 4);
  auto whole = select_diversity(ranker, pool, qs, 6, 100, rng);
  std::sort(whole.begin(), whole.end());
  CHECK(whole == pool);
  CHECK_THROWS_AS(select_diversity(ranker, pool, qs, 7, 100, rng), Error);

  Rng a(9), b(9);
  CHECK(select_diversity(ranker, pool, qs, 3, 100, a) == select_diversity(ranker, pool, qs, 3, 100, b));
}

TEST_CASE("diversity spreads selections across planted topics") {
  SyntheticSpec spec;
  spec.topics = 3;
  spec.queries_per_topic = 4;
  spec.test_queries_per_topic = 0;
  spec.topic_vocab = 4;
  spec.docs_per_topic = 10;
  const auto data = generate_synthetic(spec, 1);
  std::vector<QueryId> pool;
  std::map<QueryId, int> topic;
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    pool.push_back(data.train[i].id);
    topic[data.train[i].id] = static_cast<int>(i) / spec.queries_per_topic;
  }
  RankerConfig c;
  c.architecture = Architecture::bi;
  auto distinct = [&](const std::vector<QueryId>& sel) {
    std::set<int> topics;
    for (const auto& q : sel) topics.insert(topic[q]);
    return topics.size() == 3;
  };
  int spread = 0, random_spread = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const auto ranker = initialize_ranker(c, derive_seed(5, "init", t));
    Rng rng(derive_seed(5, "kmeans", t));
    spread += distinct(select_diversity(ranker, pool, data.train, 3, 100, rng));
    random_spread += distinct(select_random(pool, 3, rng));
  }
  // Uniform triples cover all three topics with probability 64/220.
  CHECK(std::abs(random_spread - trials * 64.0 / 220.0) <= 0.05 * trials);
  CHECK(spread >= 0.75 * trials);
  CHECK(spread >= 2 * random_spread);
}
