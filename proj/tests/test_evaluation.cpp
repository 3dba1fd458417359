#include <doctest.h>

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <sstream>

#include "alrank/evaluation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace alrank;
using alrank::testing::TempDir;

namespace {

RankedList ranked(const std::string& q, const std::vector<std::string>& docs) {
  std::vector<ScoredDocument> items;
  for (std::size_t i = 0; i < docs.size(); ++i) items.push_back({DocumentId(docs[i]), double(docs.size() - i)});
  return RankedList(QueryId(q), items);
}

Run single(const RankedList& l) {
  Run r;
  r.tag = "t";
  r.add(l);
  return r;
}

}  // namespace

TEST_CASE("nDCG examples") {
  Qrels q(1);
  q.add(QueryId("q"), DocumentId("d1"), 1);
  CHECK(ndcg_at_k(single(ranked("q", {"d1", "x"})), q, 10).mean == doctest::Approx(1.0));
  CHECK(ndcg_at_k(single(ranked("q", {"x", "d1"})), q, 10).mean ==
        doctest::Approx(1 / std::log2(3.0)).epsilon(1e-12));
  CHECK(ndcg_at_k(single(ranked("q", {"x", "d1"})), q, 10).mean == doctest::Approx(0.63093).epsilon(1e-5));

  Qrels g(1);
  g.add(QueryId("q"), DocumentId("d1"), 3);
  g.add(QueryId("q"), DocumentId("d2"), 1);
  const double expected = (1 + 3 / std::log2(3.0)) / (3 + 1 / std::log2(3.0));
  const double got = ndcg_at_k(single(ranked("q", {"d2", "d1"})), g, 10).mean;
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
  CHECK(got == doctest::Approx(0.79671).epsilon(1e-5));

  CHECK(ndcg_at_k(single(ranked("q", {"x", "d1"})), q, 1).mean == 0.0);
  CHECK_THROWS_AS(ndcg_at_k(single(ranked("q", {"d1"})), q, 0), Error);
  CHECK_THROWS_AS(ndcg_at_k(single(ranked("other", {"d1"})), q, 10), Error);
}

TEST_CASE("nDCG skips queries without positives and averages the rest") {
  Qrels q(1);
  q.add(QueryId("a"), DocumentId("d1"), 1);
  q.add(QueryId("b"), DocumentId("d1"), 0);
  Run run;
  run.add(ranked("a", {"x", "d1"}));
  run.add(ranked("b", {"d1"}));
  run.add(ranked("c", {"d1"}));
  const auto m = ndcg_at_k(run, q, 10);
  CHECK(m.count() == 1);
  CHECK(m.per_query.count(QueryId("a")) == 1);
  // Only queries of the run are evaluated.
  q.add(QueryId("z"), DocumentId("d9"), 2);
  CHECK(ndcg_at_k(run, q, 10) == m);
}

TEST_CASE("exponential gain") {
  Qrels g(1);
  g.add(QueryId("q"), DocumentId("d1"), 3);
  g.add(QueryId("q"), DocumentId("d2"), 1);
  const double expected = (1 + 7 / std::log2(3.0)) / (7 + 1 / std::log2(3.0));
  CHECK(ndcg_of(ranked("q", {"d2", "d1"}), g, 10, Gain::exponential).value() ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("nDCG matches the reference implementation on random instances") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Qrels qrels(1);
    Run run;
    std::vector<std::tuple<std::string, std::vector<std::string>, std::map<std::string, int>>> cases;
    const std::size_t queries = 1 + uniform_index(rng, 5);
    const std::size_t k = 1 + uniform_index(rng, 15);
    for (std::size_t qi = 0; qi < queries; ++qi) {
      const std::string q = "q" + std::to_string(qi);
      std::map<std::string, int> grades;
      for (int d = 0; d < 20; ++d)
        if (uniform_index(rng, 3) == 0) grades["d" + std::to_string(d)] = static_cast<int>(uniform_index(rng, 4));
      for (const auto& [d, gr] : grades) qrels.add(QueryId(q), DocumentId(d), gr);
      std::vector<std::string> order;
      for (int d = 0; d < 20; ++d) order.push_back("d" + std::to_string(d));
      shuffle(order, rng);
      order.resize(uniform_index(rng, 21));
      run.add(ranked(q, order));
      cases.emplace_back(q, order, grades);
    }
    bool any = false, shared = false;
    double sum = 0;
    std::size_t n = 0;
    for (const auto& [q, order, grades] : cases) {
      shared |= !grades.empty();
      const double ref = alrank::testing::reference_ndcg(order, grades, k);
      if (ref < 0) continue;
      any = true;
      sum += ref;
      ++n;
    }
    if (!shared) {
      CHECK_THROWS_AS(ndcg_at_k(run, qrels, k), Error);
      continue;
    }
    if (!any) {
      CHECK(ndcg_at_k(run, qrels, k).count() == 0);
      continue;
    }
    const auto m = ndcg_at_k(run, qrels, k);
    CHECK(m.count() == n);
    CHECK(std::abs(m.mean - sum / static_cast<double>(n)) <= 1e-8);
    for (const auto& [q, order, grades] : cases) {
      const double ref = alrank::testing::reference_ndcg(order, grades, k);
      if (ref < 0) continue;
      const double v = m.per_query.at(QueryId(q));
      CHECK(std::abs(v - ref) <= 1e-8);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("nDCG depends only on the order of scores") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Qrels qrels(1);
    std::vector<ScoredDocument> items, transformed;
    for (int d = 0; d < 15; ++d) {
      const DocumentId id("d" + std::to_string(d));
      if (uniform_index(rng, 3) == 0) qrels.add(QueryId("q"), id, 1 + static_cast<int>(uniform_index(rng, 3)));
      const double s = uniform_real(rng, -3, 3);
      items.push_back({id, s});
      transformed.push_back({id, std::exp(2 * s) - 5});
    }
    if (qrels.judgments(QueryId("q")).empty()) continue;
    CHECK(ndcg_of(RankedList(QueryId("q"), items), qrels, 10, Gain::linear) ==
          ndcg_of(RankedList(QueryId("q"), transformed), qrels, 10, Gain::linear));
  }
}

TEST_CASE("moving a better document up strictly increases nDCG") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    Qrels qrels(1);
    std::vector<std::string> order;
    std::map<std::string, int> grade;
    for (int d = 0; d < 8; ++d) {
      const std::string id = "d" + std::to_string(d);
      order.push_back(id);
      grade[id] = static_cast<int>(uniform_index(rng, 4));
      qrels.add(QueryId("q"), DocumentId(id), grade[id]);
    }
    shuffle(order, rng);
    const std::size_t i = uniform_index(rng, 8), j = uniform_index(rng, 8);
    if (i >= j || grade[order[j]] <= grade[order[i]]) continue;
    const double before = ndcg_of(ranked("q", order), qrels, 10, Gain::linear).value();
    std::swap(order[i], order[j]);
    CHECK(ndcg_of(ranked("q", order), qrels, 10, Gain::linear).value() > before);
  }
}

TEST_CASE("paired t-test") {
  std::vector<double> a{2, 4, 6}, b{1, 2, 3};
  const auto r = paired_ttest(a, b);
  CHECK(r.t == doctest::Approx(2 * std::sqrt(3.0)).epsilon(1e-12));
  CHECK(r.df == 2);
  boost::math::students_t dist(2);
  const double ref = 2 * boost::math::cdf(boost::math::complement(dist, r.t));
  CHECK(std::abs(r.p - ref) <= 1e-8);
  CHECK(r.p == doctest::Approx(0.0742).epsilon(1e-3));
  CHECK_FALSE(r.significant);

  const auto same = paired_ttest(a, a);
  CHECK(same.t == 0.0);
  CHECK(same.p == 1.0);
  CHECK_FALSE(same.significant);

  const auto bonf = paired_ttest(a, b, 0.3, 3);
  CHECK(bonf.corrected_alpha == doctest::Approx(0.1));
  CHECK(bonf.significant);

  std::vector<double> one{1};
  CHECK_THROWS_AS(paired_ttest(one, one), Error);
  std::vector<double> two{1, 2};
  CHECK_THROWS_AS(paired_ttest(a, two), Error);
}

TEST_CASE("t-test agrees with the reference distribution and is antisymmetric") {
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 40);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = uniform_real(rng, 0, 1);
      b[i] = a[i] + uniform_real(rng, -0.3, 0.35);
    }
    const auto ab = paired_ttest(a, b);
    const auto ba = paired_ttest(b, a);
    CHECK(ab.t == -ba.t);
    CHECK(ab.p == doctest::Approx(ba.p).epsilon(1e-14));
    boost::math::students_t dist(static_cast<double>(n - 1));
    const double ref = 2 * boost::math::cdf(boost::math::complement(dist, std::abs(ab.t)));
    CHECK(std::abs(ab.p - ref) <= 1e-8);
  }
}

TEST_CASE("incomplete beta matches the reference") {
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const double a = uniform_real(rng, 0.1, 30), b = uniform_real(rng, 0.1, 30), x = uniform_unit(rng);
    CHECK(std::abs(incomplete_beta(a, b, x) - boost::math::ibeta(a, b, x)) <= 1e-10);
  }
  CHECK(incomplete_beta(2, 3, 0) == 0.0);
  CHECK(incomplete_beta(2, 3, 1) == 1.0);
}

// ---- reports ---------------------------------------------------------------------

namespace {

ReportInputs sample_inputs() {
  ReportInputs in;
  CostConfig cost;
  Rng rng(10);
  for (const std::string strategy : {"random", "qbc"}) {
    StrategyCurve c;
    c.strategy = strategy;
    c.seed = 42;
    TimeLedger t;
    std::vector<std::uint64_t> a;
    std::uint64_t acc = 0;
    for (int i = 1; i <= 3; ++i) {
      t.record(uniform_real(rng, 0, 1), uniform_real(rng, 0, 1));
      acc += 10 + uniform_index(rng, 50);
      a.push_back(acc);
    }
    const auto report = total_cost(a, t, parse_strategy(strategy), cost);
    for (int i = 1; i <= 3; ++i) {
      IterationOutcome o;
      o.iteration = i;
      o.train_size = 5 * i;
      for (int q = 0; q < 6; ++q) o.metric.per_query[QueryId("q" + std::to_string(q))] = uniform_unit(rng);
      double s = 0;
      for (const auto& [q, v] : o.metric.per_query) s += v;
      o.metric.mean = s / 6;
      o.cost = report.rows[i - 1];
      c.iterations.push_back(o);
    }
    in.curves.push_back(c);
  }
  in.variability = {{25, 0, 1, 0.4}, {25, 1, 2, 0.5}};
  return in;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    rows.push_back(f);
  }
  return rows;
}

}  // namespace

TEST_CASE("report emission") {
  TempDir dir("reports");
  const auto in = sample_inputs();
  const auto paths = emit_reports(in, dir.path());
  CHECK(paths.size() == 5);
  const auto main = csv_rows(read_file(dir / "al_results.csv"));
  REQUIRE(main.size() == 7);
  CHECK(main[0] == std::vector<std::string>{"strategy", "seed", "iteration", "train_size", "ndcg10", "assessments",
                                            "C_A", "C_C", "C_total"});
  CostConfig cost;
  for (std::size_t r = 1; r < main.size(); ++r) {
    const auto& row = main[r];
    const auto& curve = in.curves[(r - 1) / 3];
    const auto& it = curve.iterations[(r - 1) % 3];
    CHECK(std::stod(row[8]) == it.cost.total);
    CHECK(std::stod(row[6]) + std::stod(row[7]) == std::stod(row[8]));
    CHECK(std::stod(row[6]) == annotation_cost(std::stoull(row[5]), cost));
  }
  CHECK(csv_rows(read_file(dir / "variability.csv")).size() == 3);
  CHECK(csv_rows(read_file(dir / "fig_cost_stacked.csv")).size() == 7);
  CHECK(csv_rows(read_file(dir / "fig_ndcg_vs_assessments.csv")).size() == 7);

  std::map<std::string, std::string> first;
  for (const auto& p : paths) first[p.filename().string()] = read_file(p);
  emit_reports(in, dir.path());
  for (const auto& p : paths) CHECK(read_file(p) == first[p.filename().string()]);

  const auto summary = first["summary.md"];
  CHECK(summary.find("| random |") != std::string::npos);
  CHECK(summary.find("| qbc |") != std::string::npos);
}
