#ifndef ALRANK_LEXICAL_HPP
#define ALRANK_LEXICAL_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "alrank/datamodel.hpp"

namespace alrank {

/// Lowercases ASCII letters and splits on every character that is not an
/// ASCII letter or digit. Bytes of multi-byte UTF-8 sequences are kept inside
/// tokens, so non-Latin words survive as single tokens.
std::vector<std::string> tokenize(std::string_view text);

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;
  friend bool operator==(const Bm25Params&, const Bm25Params&) = default;
};

struct Posting {
  std::uint32_t doc;
  std::uint32_t tf;
  friend bool operator==(const Posting&, const Posting&) = default;
};

struct TermPostings {
  std::vector<Posting> postings;  // sorted by doc ordinal
  std::uint32_t df() const { return static_cast<std::uint32_t>(postings.size()); }
  friend bool operator==(const TermPostings&, const TermPostings&) = default;
};

class InvertedIndex {
 public:
  InvertedIndex() = default;

  std::size_t doc_count() const { return doc_ids_.size(); }
  double avgdl() const { return avgdl_; }
  const Bm25Params& params() const { return params_; }
  const std::vector<DocumentId>& doc_ids() const { return doc_ids_; }
  const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }
  const std::map<std::string, TermPostings, std::less<>>& terms() const { return terms_; }
  const std::vector<std::string>& stopwords() const { return stopwords_; }
  std::uint32_t df(std::string_view term) const;
  /// Lucene-style idf, always non-negative.
  double idf(std::string_view term) const;

  friend bool operator==(const InvertedIndex&, const InvertedIndex&) = default;

 private:
  friend InvertedIndex build_index(const Corpus&, Bm25Params, const std::vector<std::string>&);
  friend InvertedIndex load_index(const std::filesystem::path&);

  Bm25Params params_;
  double avgdl_ = 0;
  std::vector<DocumentId> doc_ids_;
  std::vector<std::uint32_t> doc_lengths_;
  std::map<std::string, TermPostings, std::less<>> terms_;
  std::vector<std::string> stopwords_;
};

/// Throws on an empty corpus or parameters outside k1 >= 0, 0 <= b <= 1.
InvertedIndex build_index(const Corpus& corpus, Bm25Params params = {},
                          const std::vector<std::string>& stopwords = {});

double bm25_score(const InvertedIndex& index, const std::vector<std::string>& query_terms,
                  std::size_t doc_ordinal);

/// Top-k documents with positive score, canonical tie-break.
RankedList retrieve_topk(const InvertedIndex& index, const QueryId& query, std::string_view query_text,
                         std::size_t k);

/// Top-k for every query in the set.
Run retrieve_all(const InvertedIndex& index, const QuerySet& queries, std::size_t k,
                 const std::string& tag = "bm25");

// Binary layout, little-endian:
//   "ALRKIDX\0" | u32 version | f64 k1 | f64 b | f64 avgdl | u64 N
//   N x (u32 id length, id bytes, u32 doc length)
//   u64 stopword count, each (u32 length, bytes)
//   u64 term count, each (u32 length, bytes, u32 df, df x (u32 doc, u32 tf))
void save_index(const InvertedIndex& index, const std::filesystem::path& path);
InvertedIndex load_index(const std::filesystem::path& path);

}  // namespace alrank

#endif  // ALRANK_LEXICAL_HPP
