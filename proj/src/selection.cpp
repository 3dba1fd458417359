#include "alrank/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>

namespace alrank {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::random:
      return "random";
    case Strategy::uncertainty:
      return "uncertainty";
    case Strategy::qbc:
      return "qbc";
    case Strategy::diversity:
      return "diversity";
  }
  return "?";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "random") return Strategy::random;
  if (s == "uncertainty") return Strategy::uncertainty;
  if (s == "qbc") return Strategy::qbc;
  if (s == "diversity") return Strategy::diversity;
  throw Error("unknown strategy '" + std::string(s) + "' (expected random, uncertainty, qbc or diversity)");
}

void SelectionConfig::validate() const {
  if (batch_size < 1) throw Error("selection: batch size must be >= 1");
  if (candidate_depth < 1) throw Error("selection: candidate depth must be >= 1");
  if (committee_size < 2) throw Error("selection: committee needs at least 2 members");
  if (!(member_fraction > 0 && member_fraction <= 1)) throw Error("selection: member fraction must be in (0, 1]");
  if (entropy_pair_depth < 0 || (entropy_pair_depth > 0 && entropy_pair_depth < 2))
    throw Error("selection: entropy pair depth must be >= 2 (or 0 for the candidate depth)");
  if (kmeans_max_iters < 1) throw Error("selection: k-means iterations must be >= 1");
}

std::vector<QueryId> select_random(std::span<const QueryId> pool, std::size_t s, Rng& rng) {
  if (pool.empty()) throw Error("select_random: empty pool");
  if (s == 0) throw Error("select_random: s must be >= 1");
  std::vector<QueryId> out;
  for (auto i : sample_without_replacement(rng, pool.size(), s)) out.push_back(pool[i]);
  return out;
}

// ---- uncertainty ------------------------------------------------------------

UncertaintySelection select_uncertain_pairs(std::span<const ScoredPair> scored, std::size_t s, bool one_per_query) {
  if (scored.empty()) throw Error("uncertainty selection: no scored candidates");
  std::vector<ScoredPair> pairs(scored.begin(), scored.end());
  // Canonical order first, so the mean does not depend on input order.
  std::sort(pairs.begin(), pairs.end(), [](const ScoredPair& a, const ScoredPair& b) {
    return a.query != b.query ? a.query < b.query : a.doc < b.doc;
  });
  double sum = 0;
  for (const auto& p : pairs) sum += p.score;
  UncertaintySelection out;
  out.mean = sum / static_cast<double>(pairs.size());
  const double mu = out.mean;
  std::stable_sort(pairs.begin(), pairs.end(), [mu](const ScoredPair& a, const ScoredPair& b) {
    return std::abs(a.score - mu) < std::abs(b.score - mu);
  });
  std::set<QueryId> used;
  for (const auto& p : pairs) {
    if (out.pairs.size() >= s) break;
    if (one_per_query && !used.insert(p.query).second) continue;
    out.pairs.push_back(p);
  }
  return out;
}

UncertaintySelection select_uncertainty(const RankerState& ranker, std::span<const QueryId> pool,
                                        const Run& candidates, const QuerySet& queries, const Corpus& corpus,
                                        std::size_t depth, std::size_t s, bool one_per_query) {
  std::vector<std::vector<ScoredPair>> per_query(pool.size());
  parallel_for(pool.size(), [&](std::size_t i) {
    const auto& q = pool[i];
    auto it = candidates.lists.find(q);
    if (it == candidates.lists.end() || it->second.empty()) return;
    auto reranked = rerank(ranker, queries.text(q), it->second.truncated(depth), corpus);
    for (const auto& item : reranked.items()) per_query[i].push_back({q, item.doc, item.score});
  });
  std::vector<ScoredPair> all;
  for (auto& v : per_query) all.insert(all.end(), v.begin(), v.end());
  if (all.empty()) throw Error("uncertainty selection: no pool query has BM25 candidates");
  return select_uncertain_pairs(all, s, one_per_query);
}

// ---- query by committee -----------------------------------------------------

double vote_entropy(std::span<const RankedList> members, std::size_t pair_depth) {
  if (members.size() < 2) throw Error("vote entropy needs at least 2 committee members");
  if (pair_depth < 2) throw Error("vote entropy pair depth must be >= 2");
  const auto first_docs = members[0].documents();
  const std::set<DocumentId> reference(first_docs.begin(), first_docs.end());
  std::vector<std::map<DocumentId, std::size_t>> position(members.size());
  for (std::size_t m = 0; m < members.size(); ++m) {
    const auto docs = members[m].documents();
    if (std::set<DocumentId>(docs.begin(), docs.end()) != reference)
      throw Error("vote entropy: committee members ranked different candidate sets");
    for (std::size_t r = 0; r < docs.size(); ++r) position[m][docs[r]] = r;
  }
  const auto top = members[0].truncated(pair_depth).documents();
  const double m_count = static_cast<double>(members.size());
  double sum = 0;
  for (std::size_t i = 0; i < top.size(); ++i) {
    for (std::size_t j = 0; j < top.size(); ++j) {
      if (i == j) continue;
      std::size_t votes = 0;
      for (const auto& pos : position)
        if (pos.at(top[i]) < pos.at(top[j])) ++votes;
      if (votes == 0) continue;
      const double n = static_cast<double>(votes);
      sum += n * std::log(n / m_count);
    }
  }
  // -0.0 for full agreement reads oddly in reports.
  const double ve = -sum / m_count;
  return ve == 0 ? 0.0 : ve;
}

std::vector<ScoredQuery> top_by_score(std::vector<ScoredQuery> scored, std::size_t s) {
  std::sort(scored.begin(), scored.end(), [](const ScoredQuery& a, const ScoredQuery& b) {
    return a.score != b.score ? a.score > b.score : a.query < b.query;
  });
  if (scored.size() > s) scored.resize(s);
  return scored;
}

std::vector<ScoredQuery> select_qbc(std::span<const RankerState> committee, std::span<const QueryId> pool,
                                    const Run& candidates, const QuerySet& queries, const Corpus& corpus,
                                    std::size_t depth, std::size_t pair_depth, std::size_t s) {
  if (committee.size() < 2) throw Error("QBC needs at least 2 committee members");
  std::vector<std::optional<ScoredQuery>> per_query(pool.size());
  parallel_for(pool.size(), [&](std::size_t i) {
    const auto& q = pool[i];
    auto it = candidates.lists.find(q);
    if (it == candidates.lists.end() || it->second.size() < 2) {
      // Fewer than two candidates: nothing to disagree on.
      per_query[i] = ScoredQuery{q, 0.0};
      return;
    }
    const auto cand = it->second.truncated(depth);
    std::vector<RankedList> rankings;
    for (const auto& member : committee) rankings.push_back(rerank(member, queries.text(q), cand, corpus));
    per_query[i] = ScoredQuery{q, vote_entropy(rankings, pair_depth)};
  });
  std::vector<ScoredQuery> scored;
  for (auto& v : per_query) scored.push_back(*v);
  return top_by_score(std::move(scored), s);
}

// ---- diversity --------------------------------------------------------------

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

KMeansResult kmeans(std::span<const std::vector<double>> points, std::size_t k, int max_iters, Rng& rng) {
  const std::size_t n = points.size();
  if (k == 0) throw Error("kmeans: k must be >= 1");
  if (k > n) throw Error("kmeans: k (" + std::to_string(k) + ") exceeds number of points (" + std::to_string(n) + ")");
  const std::size_t dim = points[0].size();
  for (const auto& p : points)
    if (p.size() != dim) throw Error("kmeans: points have different dimensions");

  KMeansResult res;
  // k-means++ seeding.
  std::vector<std::size_t> chosen{uniform_index(rng, n)};
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  taken[chosen[0]] = 1;
  while (chosen.size() < k) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(points[i], points[chosen.back()]));
      if (!taken[i]) total += nearest[i];
    }
    std::size_t pick = n;
    if (total > 0) {
      double target = uniform_unit(rng) * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i] || nearest[i] == 0) continue;
        pick = i;
        target -= nearest[i];
        if (target < 0) break;
      }
    } else {
      // All remaining points coincide with a centre: pick uniformly among them.
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i]) free.push_back(i);
      pick = free[uniform_index(rng, free.size())];
    }
    taken[pick] = 1;
    chosen.push_back(pick);
  }
  for (auto c : chosen) res.centroids.push_back(points[c]);

  auto assign = [&](std::vector<std::size_t>& a) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = a[i] < k ? a[i] : 0;
      double best_d = squared_distance(points[i], res.centroids[best]);
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(points[i], res.centroids[c]);
        if (d < best_d) {
          best = c;
          best_d = d;
        }
      }
      if (best != a[i]) changed = true;
      a[i] = best;
    }
    return changed;
  };

  auto repair = [&](std::vector<std::size_t>& a) {
    std::vector<std::size_t> sizes(k, 0);
    for (auto c : a) ++sizes[c];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) continue;
      std::size_t far = n;
      double far_d = -1;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[a[i]] < 2) continue;
        const double d = squared_distance(points[i], res.centroids[a[i]]);
        if (d > far_d) {
          far = i;
          far_d = d;
        }
      }
      --sizes[a[far]];
      a[far] = c;
      ++sizes[c];
      res.centroids[c] = points[far];
    }
  };

  auto update = [&](const std::vector<std::size_t>& a) {
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[a[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[a[i]][j] += points[i][j];
    }
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t j = 0; j < dim; ++j) res.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    double obj = 0;
    for (std::size_t i = 0; i < n; ++i) obj += squared_distance(points[i], res.centroids[a[i]]);
    res.objective_history.push_back(obj);
  };

  res.assignment.assign(n, k);  // k marks "unassigned"
  for (int it = 0; it < max_iters; ++it) {
    const bool changed = assign(res.assignment);
    if (!changed && it > 0) break;
    repair(res.assignment);
    update(res.assignment);
    res.iterations = it + 1;
  }
  return res;
}

std::vector<QueryId> select_diversity(const RankerState& ranker, std::span<const QueryId> pool,
                                      const QuerySet& queries, std::size_t s, int max_iters, Rng& rng) {
  if (pool.empty()) throw Error("diversity selection: empty pool");
  if (s > pool.size()) throw Error("diversity selection: s exceeds pool size");
  std::vector<std::vector<double>> points(pool.size());
  parallel_for(pool.size(), [&](std::size_t i) { points[i] = encode_query(ranker, queries.text(pool[i])); });
  const auto clusters = kmeans(points, s, max_iters, rng);
  std::vector<std::vector<std::size_t>> members(s);
  for (std::size_t i = 0; i < pool.size(); ++i) members[clusters.assignment[i]].push_back(i);
  std::vector<QueryId> out;
  for (const auto& m : members) out.push_back(pool[m[uniform_index(rng, m.size())]]);
  return out;
}

}  // namespace alrank
