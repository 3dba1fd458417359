#include "alrank/annotation.hpp"

#include <sstream>

namespace alrank {

std::string to_string(Outcome o) { return o == Outcome::triplet ? "triplet" : "skipped"; }

Outcome parse_outcome(std::string_view s) {
  if (s == "triplet") return Outcome::triplet;
  if (s == "skipped") return Outcome::skipped;
  throw Error("unknown annotation outcome '" + std::string(s) + "'");
}

FirstRelevant first_relevant(const RankedList& ranked, const Qrels& qrels, std::size_t depth) {
  if (depth == 0) throw Error("first_relevant: depth must be >= 1");
  FirstRelevant out;
  const std::size_t limit = std::min(depth, ranked.size());
  for (std::size_t r = 1; r <= limit; ++r) {
    out.examined = r;
    const auto& doc = ranked.at_rank(r).doc;
    if (qrels.is_relevant(ranked.query(), doc)) {
      out.rank = r;
      out.doc = doc;
      return out;
    }
  }
  return out;
}

DocumentId sample_negative(const QueryId& query, const DocumentId& positive, const RankedList& negative_pool,
                           const Qrels& qrels, Rng& rng, const AnnotatorOptions& opts) {
  std::vector<const DocumentId*> eligible;
  for (const auto& item : negative_pool.items()) {
    if (item.doc == positive) continue;
    if (opts.exclude_relevant_negatives && qrels.is_relevant(query, item.doc)) continue;
    eligible.push_back(&item.doc);
  }
  if (eligible.empty())
    throw Error("no eligible negative for query " + query.str() + " among " +
                std::to_string(negative_pool.size()) + " candidates");
  return *eligible[uniform_index(rng, eligible.size())];
}

AnnotationResult annotate_query(const QueryId& query, const RankedList& ranking, const RankedList& negative_pool,
                                const Qrels& qrels, Rng& rng, const AnnotatorOptions& opts) {
  AnnotationResult res;
  res.query = query;
  const auto walk = first_relevant(ranking, qrels, opts.positive_depth);
  res.depth_examined = walk.examined;
  if (!walk.found()) {
    res.assessments = walk.examined;
    return res;
  }
  res.positive_rank = walk.rank;
  res.assessments = *walk.rank;
  res.outcome = Outcome::triplet;
  res.triplet = TrainingTriplet{query, *walk.doc, sample_negative(query, *walk.doc, negative_pool, qrels, rng, opts)};
  return res;
}

AnnotationResult annotate_pair(const QueryId& query, const DocumentId& selected, const Qrels& qrels,
                               const RankedList& ranking, const RankedList& negative_pool, Rng& rng,
                               const AnnotatorOptions& opts) {
  AnnotationResult res;
  res.query = query;
  if (qrels.is_relevant(query, selected)) {
    res.assessments = 1;
    res.outcome = Outcome::triplet;
    res.triplet = TrainingTriplet{query, selected, sample_negative(query, selected, negative_pool, qrels, rng, opts)};
    return res;
  }
  const auto walk = first_relevant(ranking, qrels, opts.positive_depth);
  res.depth_examined = walk.examined;
  if (!walk.found()) {
    res.assessments = 1 + walk.examined;
    return res;
  }
  res.positive_rank = walk.rank;
  res.assessments = 1 + *walk.rank;
  res.outcome = Outcome::triplet;
  res.triplet = TrainingTriplet{query, *walk.doc, selected};
  return res;
}

void AssessmentLedger::record(int iteration, std::span<const AnnotationResult> results) {
  if (iteration != iterations() + 1)
    throw Error("ledger: expected iteration " + std::to_string(iterations() + 1) + ", got " +
                std::to_string(iteration));
  std::uint64_t sum = 0;
  for (const auto& r : results) {
    sum += r.assessments;
    rows_.push_back({iteration, r});
  }
  per_iteration_.push_back(sum);
  cumulative_.push_back(cumulative(iteration - 1) + sum);
}

std::uint64_t AssessmentLedger::cumulative(int iteration) const {
  if (iteration < 0 || iteration > iterations()) throw Error("ledger: iteration out of range");
  return iteration == 0 ? 0 : cumulative_[iteration - 1];
}

std::uint64_t AssessmentLedger::at_iteration(int iteration) const {
  if (iteration < 1 || iteration > iterations()) throw Error("ledger: iteration out of range");
  return per_iteration_[iteration - 1];
}

std::string AssessmentLedger::to_csv() const {
  std::string out = "iteration,query,outcome,assessments,positive,negative\n";
  for (const auto& row : rows_) {
    const auto& r = row.result;
    out += std::to_string(row.iteration) + "," + r.query.str() + "," + to_string(r.outcome) + "," +
           std::to_string(r.assessments) + "," + (r.triplet ? r.triplet->positive.str() : "") + "," +
           (r.triplet ? r.triplet->negative.str() : "") + "\n";
  }
  return out;
}

AssessmentLedger AssessmentLedger::from_csv(const std::string& content, const std::string& source) {
  std::istringstream in(content);
  std::string line;
  std::size_t lineno = 0;
  AssessmentLedger ledger;
  std::vector<AnnotationResult> pending;
  int pending_iteration = 0;
  auto flush_until = [&](int iteration) {
    while (ledger.iterations() + 1 < iteration) {
      if (ledger.iterations() + 1 == pending_iteration) {
        ledger.record(pending_iteration, pending);
        pending.clear();
      } else {
        ledger.record(ledger.iterations() + 1, {});
      }
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != "iteration,query,outcome,assessments,positive,negative")
        throw ParseError(source, lineno, "unexpected ledger header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 6) throw ParseError(source, lineno, "expected 6 columns");
    int iteration = 0;
    long long assessments = 0;
    try {
      std::size_t used = 0;
      iteration = std::stoi(f[0], &used);
      if (used != f[0].size()) throw std::invalid_argument("iteration");
      assessments = std::stoll(f[3], &used);
      if (used != f[3].size() || assessments < 0) throw std::invalid_argument("assessments");
    } catch (const std::exception&) {
      throw ParseError(source, lineno, "bad iteration or assessment count");
    }
    if (iteration < 1 || iteration < pending_iteration)
      throw ParseError(source, lineno, "iterations must be >= 1 and non-decreasing");
    if (iteration != pending_iteration) {
      flush_until(iteration);
      pending_iteration = iteration;
    }
    AnnotationResult r;
    r.query = QueryId{f[1]};
    try {
      r.outcome = parse_outcome(f[2]);
    } catch (const Error& e) {
      throw ParseError(source, lineno, e.what());
    }
    r.assessments = static_cast<std::size_t>(assessments);
    if (r.outcome == Outcome::triplet) {
      if (f[4].empty() || f[5].empty()) throw ParseError(source, lineno, "triplet row without documents");
      r.triplet = TrainingTriplet{r.query, DocumentId{f[4]}, DocumentId{f[5]}};
    }
    pending.push_back(std::move(r));
  }
  if (pending_iteration > 0) flush_until(pending_iteration + 1);
  return ledger;
}

}  // namespace alrank
