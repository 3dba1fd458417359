#ifndef ALRANK_DATAMODEL_HPP
#define ALRANK_DATAMODEL_HPP

#include <compare>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "alrank/common.hpp"

namespace alrank {

/// Opaque identifier. Non-empty, no whitespace. The tag keeps document and
/// query ids from being mixed up.
template <class Tag>
class Identifier {
 public:
  Identifier() = default;
  explicit Identifier(std::string value) : value_(std::move(value)) {
    if (!valid(value_)) throw Error("invalid identifier '" + value_ + "'");
  }

  static bool valid(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') return false;
    return true;
  }

  const std::string& str() const { return value_; }
  bool empty() const { return value_.empty(); }

  friend auto operator<=>(const Identifier&, const Identifier&) = default;
  friend bool operator==(const Identifier&, const Identifier&) = default;

 private:
  std::string value_;
};

using DocumentId = Identifier<struct DocumentTag>;
using QueryId = Identifier<struct QueryTag>;

struct IdHash {
  template <class Tag>
  std::size_t operator()(const Identifier<Tag>& id) const {
    return std::hash<std::string>{}(id.str());
  }
};

/// Insertion-ordered id -> text table. Shared shape of a corpus and a query set.
template <class Id>
class TextTable {
 public:
  struct Entry {
    Id id;
    std::string text;
  };

  /// Throws on duplicate id.
  void add(Id id, std::string text) {
    if (index_.count(id)) throw Error("duplicate id '" + id.str() + "'");
    index_.emplace(id, entries_.size());
    entries_.push_back({std::move(id), std::move(text)});
  }

  bool contains(const Id& id) const { return index_.count(id) != 0; }
  const std::string& text(const Id& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error("unknown id '" + id.str() + "'");
    return entries_[it->second].text;
  }
  std::optional<std::size_t> ordinal(const Id& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  friend bool operator==(const TextTable& a, const TextTable& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i)
      if (!(a.entries_[i].id == b.entries_[i].id) || a.entries_[i].text != b.entries_[i].text)
        return false;
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<Id, std::size_t, IdHash> index_;
};

using Corpus = TextTable<DocumentId>;
using QuerySet = TextTable<QueryId>;

/// Graded judgments with a binary relevance threshold.
class Qrels {
 public:
  explicit Qrels(int threshold = 1);

  /// Throws on a duplicate pair or negative grade.
  void add(const QueryId& q, const DocumentId& d, int grade);

  std::optional<int> grade(const QueryId& q, const DocumentId& d) const;
  /// Unjudged pairs are not relevant.
  bool is_relevant(const QueryId& q, const DocumentId& d) const;
  int threshold() const { return threshold_; }

  /// Judgments of one query ordered by document id; empty if none.
  const std::map<DocumentId, int>& judgments(const QueryId& q) const;
  const std::map<QueryId, std::map<DocumentId, int>>& all() const { return table_; }
  std::size_t size() const;

  friend bool operator==(const Qrels&, const Qrels&) = default;

 private:
  int threshold_;
  std::map<QueryId, std::map<DocumentId, int>> table_;
};

struct ScoredDocument {
  DocumentId doc;
  double score;
  friend bool operator==(const ScoredDocument&, const ScoredDocument&) = default;
};

/// Ranking for one query. Sorted by score descending then document id
/// ascending; document ids are unique. Ranks are 1-based positions.
class RankedList {
 public:
  RankedList() = default;
  /// Sorts the input into canonical order. Throws on duplicate documents or
  /// non-finite scores.
  RankedList(QueryId query, std::vector<ScoredDocument> items);

  const QueryId& query() const { return query_; }
  const std::vector<ScoredDocument>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const ScoredDocument& at_rank(std::size_t rank) const { return items_.at(rank - 1); }
  RankedList truncated(std::size_t depth) const;
  std::vector<DocumentId> documents() const;

  friend bool operator==(const RankedList&, const RankedList&) = default;

 private:
  QueryId query_;
  std::vector<ScoredDocument> items_;
};

/// Canonical ordering used by every ranking in the library.
bool ranks_before(const ScoredDocument& a, const ScoredDocument& b);

struct Run {
  std::string tag;
  std::map<QueryId, RankedList> lists;

  /// Throws if a list's query differs from its key.
  void add(RankedList list);
  friend bool operator==(const Run&, const Run&) = default;
};

struct TrainingTriplet {
  QueryId query;
  DocumentId positive;
  DocumentId negative;
  friend bool operator==(const TrainingTriplet&, const TrainingTriplet&) = default;
};

/// Throws if positive == negative or either doc is missing from the corpus.
void validate_triplet(const TrainingTriplet& t, const Corpus& corpus);

// ---- file formats ---------------------------------------------------------

struct CollectionOptions {
  bool allow_empty_text = false;
};

Corpus parse_collection(const std::filesystem::path& path, CollectionOptions opts = {});
QuerySet parse_queries(const std::filesystem::path& path, CollectionOptions opts = {});
Corpus parse_collection_text(const std::string& content, const std::string& source = "<memory>",
                             CollectionOptions opts = {});
QuerySet parse_queries_text(const std::string& content, const std::string& source = "<memory>",
                            CollectionOptions opts = {});
std::string serialize_collection(const Corpus& corpus);
std::string serialize_queries(const QuerySet& queries);

Qrels parse_qrels(const std::filesystem::path& path, int threshold = 1);
Qrels parse_qrels_text(const std::string& content, int threshold = 1,
                       const std::string& source = "<memory>");
std::string serialize_qrels(const Qrels& qrels);

std::string serialize_run(const Run& run);
Run parse_run_text(const std::string& content, const std::string& source = "<memory>");
void write_run(const Run& run, const std::filesystem::path& path);
Run parse_run(const std::filesystem::path& path);

std::string serialize_triplets(const std::vector<TrainingTriplet>& triplets);
std::vector<TrainingTriplet> parse_triplets_text(const std::string& content,
                                                 const std::string& source = "<memory>");

/// Formats a double so that parsing it back yields the same value.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace alrank

#endif  // ALRANK_DATAMODEL_HPP
