#include "alrank/lexical.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "binary_io.hpp"

namespace alrank {

namespace {

constexpr char kIndexMagic[8] = {'A', 'L', 'R', 'K', 'I', 'D', 'X', '\0'};
constexpr std::uint32_t kIndexVersion = 1;

bool is_token_char(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

double term_weight(double idf, double tf, double dl, const InvertedIndex& index) {
  const auto& p = index.params();
  return idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * dl / index.avgdl()));
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (is_token_char(c)) {
      cur += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::uint32_t InvertedIndex::df(std::string_view term) const {
  auto it = terms_.find(term);
  return it == terms_.end() ? 0 : it->second.df();
}

double InvertedIndex::idf(std::string_view term) const {
  const double n = static_cast<double>(doc_count());
  const double d = df(term);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

InvertedIndex build_index(const Corpus& corpus, Bm25Params params, const std::vector<std::string>& stopwords) {
  if (corpus.empty()) throw Error("cannot index an empty corpus");
  if (!(params.k1 >= 0)) throw Error("BM25 k1 must be >= 0");
  if (!(params.b >= 0 && params.b <= 1)) throw Error("BM25 b must be in [0, 1]");

  InvertedIndex index;
  index.params_ = params;
  index.stopwords_ = stopwords;
  std::sort(index.stopwords_.begin(), index.stopwords_.end());
  index.stopwords_.erase(std::unique(index.stopwords_.begin(), index.stopwords_.end()), index.stopwords_.end());
  const std::set<std::string> stop(index.stopwords_.begin(), index.stopwords_.end());

  double total = 0;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    index.doc_ids_.push_back(corpus[d].id);
    std::map<std::string, std::uint32_t> tf;
    std::uint32_t len = 0;
    for (auto& tok : tokenize(corpus[d].text)) {
      if (stop.count(tok)) continue;
      ++tf[std::move(tok)];
      ++len;
    }
    index.doc_lengths_.push_back(len);
    total += len;
    for (const auto& [term, count] : tf)
      index.terms_[term].postings.push_back({static_cast<std::uint32_t>(d), count});
  }
  index.avgdl_ = total / static_cast<double>(corpus.size());
  return index;
}

double bm25_score(const InvertedIndex& index, const std::vector<std::string>& query_terms, std::size_t doc_ordinal) {
  if (doc_ordinal >= index.doc_count()) throw Error("document ordinal out of range");
  if (index.avgdl() == 0) return 0;
  const double dl = index.doc_lengths()[doc_ordinal];
  double score = 0;
  for (const auto& term : query_terms) {
    auto it = index.terms().find(term);
    if (it == index.terms().end()) continue;
    const auto& postings = it->second.postings;
    auto p = std::lower_bound(postings.begin(), postings.end(), doc_ordinal,
                              [](const Posting& a, std::size_t d) { return a.doc < d; });
    if (p == postings.end() || p->doc != doc_ordinal) continue;
    score += term_weight(index.idf(term), p->tf, dl, index);
  }
  return score;
}

RankedList retrieve_topk(const InvertedIndex& index, const QueryId& query, std::string_view query_text,
                         std::size_t k) {
  if (k == 0) throw Error("retrieve_topk: k must be >= 1");
  if (index.avgdl() == 0) return RankedList(query, {});
  // Accumulates term by term in query order, the same order bm25_score uses,
  // so both paths produce identical sums.
  std::vector<double> acc(index.doc_count(), 0.0);
  std::vector<std::uint32_t> touched;
  for (const auto& term : tokenize(query_text)) {
    auto it = index.terms().find(term);
    if (it == index.terms().end()) continue;
    const double idf = index.idf(term);
    for (const auto& p : it->second.postings) {
      if (acc[p.doc] == 0.0) touched.push_back(p.doc);
      acc[p.doc] += term_weight(idf, p.tf, index.doc_lengths()[p.doc], index);
    }
  }
  std::vector<ScoredDocument> hits;
  hits.reserve(touched.size());
  for (auto d : touched)
    if (acc[d] > 0) hits.push_back({index.doc_ids()[d], acc[d]});
  const std::size_t keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + keep, hits.end(), ranks_before);
  hits.resize(keep);
  return RankedList(query, std::move(hits));
}

Run retrieve_all(const InvertedIndex& index, const QuerySet& queries, std::size_t k, const std::string& tag) {
  std::vector<RankedList> lists(queries.size());
  parallel_for(queries.size(), [&](std::size_t i) {
    lists[i] = retrieve_topk(index, queries[i].id, queries[i].text, k);
  });
  Run run;
  run.tag = tag;
  for (auto& l : lists) run.add(std::move(l));
  return run;
}

void save_index(const InvertedIndex& index, const std::filesystem::path& path) {
  detail::BinaryWriter w;
  w.put_raw(std::string_view(kIndexMagic, sizeof kIndexMagic));
  w.put<std::uint32_t>(kIndexVersion);
  w.put<double>(index.params().k1);
  w.put<double>(index.params().b);
  w.put<double>(index.avgdl());
  w.put<std::uint64_t>(index.doc_count());
  for (std::size_t d = 0; d < index.doc_count(); ++d) {
    w.put_string(index.doc_ids()[d].str());
    w.put<std::uint32_t>(index.doc_lengths()[d]);
  }
  // Stopwords are needed so query-side behaviour matches after reload.
  const auto& stop = index.stopwords();
  w.put<std::uint64_t>(stop.size());
  for (const auto& s : stop) w.put_string(s);
  w.put<std::uint64_t>(index.terms().size());
  for (const auto& [term, tp] : index.terms()) {
    w.put_string(term);
    w.put<std::uint32_t>(tp.df());
    for (const auto& p : tp.postings) {
      w.put<std::uint32_t>(p.doc);
      w.put<std::uint32_t>(p.tf);
    }
  }
  write_file(path, w.bytes());
}

InvertedIndex load_index(const std::filesystem::path& path) {
  detail::BinaryReader r(read_file(path), path.string());
  if (r.get_raw(sizeof kIndexMagic) != std::string_view(kIndexMagic, sizeof kIndexMagic))
    throw Error(path.string() + ": not an index file");
  auto version = r.get<std::uint32_t>();
  if (version != kIndexVersion)
    throw Error(path.string() + ": unsupported index version " + std::to_string(version));
  InvertedIndex index;
  index.params_.k1 = r.get<double>();
  index.params_.b = r.get<double>();
  index.avgdl_ = r.get<double>();
  auto n = r.get<std::uint64_t>();
  for (std::uint64_t d = 0; d < n; ++d) {
    index.doc_ids_.emplace_back(r.get_string());
    index.doc_lengths_.push_back(r.get<std::uint32_t>());
  }
  auto n_stop = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_stop; ++i) index.stopwords_.push_back(r.get_string());
  auto n_terms = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_terms; ++i) {
    std::string term = r.get_string();
    auto df = r.get<std::uint32_t>();
    TermPostings tp;
    tp.postings.reserve(df);
    for (std::uint32_t j = 0; j < df; ++j) {
      Posting p;
      p.doc = r.get<std::uint32_t>();
      p.tf = r.get<std::uint32_t>();
      if (p.doc >= n) throw Error(path.string() + ": posting references unknown document");
      tp.postings.push_back(p);
    }
    index.terms_.emplace(std::move(term), std::move(tp));
  }
  if (!r.at_end()) throw Error(path.string() + ": trailing bytes");
  return index;
}

}  // namespace alrank
