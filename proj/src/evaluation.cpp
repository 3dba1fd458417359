#include "alrank/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

namespace alrank {

std::optional<double> ndcg_of(const RankedList& ranking, const Qrels& qrels, std::size_t k, Gain gain) {
  auto g = [gain](int grade) {
    return gain == Gain::linear ? static_cast<double>(grade) : std::exp2(static_cast<double>(grade)) - 1.0;
  };
  const auto& judged = qrels.judgments(ranking.query());
  std::vector<int> grades;
  for (const auto& [doc, grade] : judged)
    if (grade > 0) grades.push_back(grade);
  if (grades.empty()) return std::nullopt;
  std::sort(grades.begin(), grades.end(), std::greater<>());

  double ideal = 0;
  for (std::size_t i = 0; i < std::min(k, grades.size()); ++i) ideal += g(grades[i]) / std::log2(i + 2.0);
  double dcg = 0;
  const std::size_t depth = std::min(k, ranking.size());
  for (std::size_t i = 0; i < depth; ++i) {
    auto it = judged.find(ranking.items()[i].doc);
    if (it == judged.end() || it->second <= 0) continue;
    dcg += g(it->second) / std::log2(i + 2.0);
  }
  return dcg / ideal;
}

MetricResult ndcg_at_k(const Run& run, const Qrels& qrels, std::size_t k, Gain gain) {
  if (k == 0) throw Error("ndcg: k must be >= 1");
  bool shared = false;
  MetricResult res;
  res.k = k;
  for (const auto& [q, list] : run.lists) {
    if (qrels.all().count(q) == 0) continue;
    shared = true;
    if (auto v = ndcg_of(list, qrels, k, gain)) res.per_query.emplace(q, *v);
  }
  if (!shared) throw Error("ndcg: run and qrels share no queries");
  double sum = 0;
  for (const auto& [q, v] : res.per_query) sum += v;
  res.mean = res.per_query.empty() ? 0.0 : sum / static_cast<double>(res.per_query.size());
  return res;
}

// ---- t-test -------------------------------------------------------------------

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1, qam = a - 1;
  double c = 1, d = 1 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1) < kEps) return h;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0 && b > 0)) throw Error("incomplete_beta: a and b must be positive");
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1) / (a + b + 2)) return front * beta_continued_fraction(a, b, x) / a;
  return 1 - front * beta_continued_fraction(b, a, 1 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0)) throw Error("t distribution needs df > 0");
  if (std::isinf(t)) return 0;
  return incomplete_beta(df / 2, 0.5, df / (df + t * t));
}

SignificanceResult paired_ttest(std::span<const double> a, std::span<const double> b, double alpha,
                                std::size_t comparisons) {
  if (a.size() != b.size()) throw Error("paired t-test: samples differ in length");
  if (a.size() < 2) throw Error("paired t-test: need at least 2 pairs");
  if (comparisons < 1) throw Error("paired t-test: comparisons must be >= 1");
  SignificanceResult r;
  const std::size_t n = a.size();
  r.df = n - 1;
  r.alpha = alpha;
  r.comparisons = comparisons;
  r.corrected_alpha = alpha / static_cast<double>(comparisons);

  double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0) {
    if (mean == 0) return r;  // t = 0, p = 1
    r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = 0;
  } else {
    r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    r.p = student_t_two_sided_p(r.t, static_cast<double>(r.df));
  }
  r.significant = r.p < r.corrected_alpha;
  return r;
}

// ---- reports ------------------------------------------------------------------

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Per-query mean over several metric results, restricted to queries present in all.
std::map<QueryId, double> average_per_query(const std::vector<const MetricResult*>& results) {
  std::map<QueryId, double> out;
  if (results.empty()) return out;
  for (const auto& [q, v] : results[0]->per_query) {
    double sum = 0;
    bool everywhere = true;
    for (const auto* r : results) {
      auto it = r->per_query.find(q);
      if (it == r->per_query.end()) {
        everywhere = false;
        break;
      }
      sum += it->second;
    }
    if (everywhere) out.emplace(q, sum / static_cast<double>(results.size()));
  }
  return out;
}

}  // namespace

std::string summary_table(const ReportInputs& in) {
  int max_iter = 0;
  std::vector<std::string> order;
  for (const auto& c : in.curves) {
    if (std::find(order.begin(), order.end(), c.strategy) == order.end()) order.push_back(c.strategy);
    for (const auto& it : c.iterations) max_iter = std::max(max_iter, it.iteration);
  }
  // Random first, as the reference row.
  std::stable_partition(order.begin(), order.end(), [](const std::string& s) { return s == "random"; });

  std::string out = "# nDCG@" + std::to_string(in.bm25 ? in.bm25->k : 10) + " by iteration\n\n";
  out += "| Strategy |";
  for (int i = 1; i <= max_iter; ++i) out += " it " + std::to_string(i) + " |";
  out += "\n|---|";
  for (int i = 1; i <= max_iter; ++i) out += "---|";
  out += "\n";
  auto constant_row = [&](const std::string& name, const MetricResult& m) {
    out += "| " + name + " |";
    for (int i = 1; i <= max_iter; ++i) out += " " + fixed(m.mean) + " |";
    out += "\n";
  };
  if (in.bm25) constant_row("BM25", *in.bm25);
  if (in.untrained) constant_row("Untrained", *in.untrained);

  auto outcomes_at = [&](const std::string& strategy, int iteration) {
    std::vector<const IterationOutcome*> v;
    for (const auto& c : in.curves)
      if (c.strategy == strategy)
        for (const auto& it : c.iterations)
          if (it.iteration == iteration) v.push_back(&it);
    return v;
  };

  for (const auto& strategy : order) {
    out += "| " + strategy + " |";
    for (int i = 1; i <= max_iter; ++i) {
      auto here = outcomes_at(strategy, i);
      if (here.empty()) {
        out += " - |";
        continue;
      }
      double mean = 0, size = 0;
      std::vector<const MetricResult*> metrics;
      for (const auto* o : here) {
        mean += o->metric.mean;
        size += static_cast<double>(o->train_size);
        metrics.push_back(&o->metric);
      }
      mean /= static_cast<double>(here.size());
      size /= static_cast<double>(here.size());
      std::string mark;
      if (strategy != "random") {
        std::vector<const MetricResult*> reference;
        for (const auto* o : outcomes_at("random", i)) reference.push_back(&o->metric);
        const auto ref = average_per_query(reference);
        const auto mine = average_per_query(metrics);
        std::vector<double> a, b;
        for (const auto& [q, v] : mine) {
          auto it = ref.find(q);
          if (it == ref.end()) continue;
          a.push_back(v);
          b.push_back(it->second);
        }
        if (a.size() >= 2 && paired_ttest(a, b, in.alpha, in.comparisons).significant) mark = "*";
      }
      out += " " + fixed(mean) + mark + " (D=" + fixed(size, 1) + ") |";
    }
    out += "\n";
  }
  out += "\n`*` paired t-test against random, p < " + fixed(in.alpha, 2) + " with Bonferroni correction (n=" +
         std::to_string(in.comparisons) + ").\n";
  return out;
}

std::vector<std::filesystem::path> emit_reports(const ReportInputs& in, const std::filesystem::path& out_dir) {
  std::string main = "strategy,seed,iteration,train_size,ndcg10,assessments,C_A,C_C,C_total\n";
  std::string stacked = "strategy,seed,iteration,train_size,ndcg10,C_A,C_C\n";
  std::string by_assessments = "strategy,seed,iteration,assessments,ndcg10\n";
  for (const auto& c : in.curves) {
    const std::string prefix = c.strategy + "," + std::to_string(c.seed) + ",";
    for (const auto& it : c.iterations) {
      const std::string ndcg = format_double(it.metric.mean);
      main += prefix + std::to_string(it.iteration) + "," + std::to_string(it.train_size) + "," + ndcg + "," +
              std::to_string(it.cost.assessments) + "," + format_double(it.cost.annotation) + "," +
              format_double(it.cost.compute) + "," + format_double(it.cost.total) + "\n";
      stacked += prefix + std::to_string(it.iteration) + "," + std::to_string(it.train_size) + "," + ndcg + "," +
                 format_double(it.cost.annotation) + "," + format_double(it.cost.compute) + "\n";
      by_assessments += prefix + std::to_string(it.iteration) + "," + std::to_string(it.cost.assessments) + "," +
                        ndcg + "\n";
    }
  }
  std::string variability = "strategy,size,seed,ndcg10\n";
  for (const auto& v : in.variability)
    variability += "random," + std::to_string(v.size) + "," + std::to_string(v.seed) + "," + format_double(v.ndcg) + "\n";

  std::vector<std::filesystem::path> written;
  auto put = [&](const char* name, const std::string& content) {
    auto p = out_dir / name;
    write_file(p, content);
    written.push_back(p);
  };
  put("al_results.csv", main);
  put("fig_cost_stacked.csv", stacked);
  put("fig_ndcg_vs_assessments.csv", by_assessments);
  put("variability.csv", variability);
  put("summary.md", summary_table(in));
  return written;
}

}  // namespace alrank
