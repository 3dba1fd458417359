#include "alrank/datamodel.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace alrank {

namespace {

/// Splits content into lines; a trailing newline does not produce an extra
/// empty line. CR before LF is stripped.
std::vector<std::string_view> split_lines(const std::string& content) {
  std::vector<std::string_view> lines;
  std::string_view rest(content);
  while (!rest.empty()) {
    auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    rest.remove_prefix(nl + 1);
  }
  return lines;
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_real(std::string_view s, double& out) {
  // from_chars for doubles is unavailable on some toolchains; strtod with a
  // full-consumption check is equivalent here.
  std::string tmp(s);
  char* end = nullptr;
  out = std::strtod(tmp.c_str(), &end);
  return !tmp.empty() && end == tmp.c_str() + tmp.size();
}

template <class Id>
TextTable<Id> parse_table(const std::string& content, const std::string& source,
                          CollectionOptions opts) {
  TextTable<Id> table;
  auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    auto line = lines[i];
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError(source, lineno, "missing tab separator");
    std::string id(line.substr(0, tab));
    std::string text(line.substr(tab + 1));
    if (!Id::valid(id)) throw ParseError(source, lineno, "invalid id '" + id + "'");
    if (text.empty() && !opts.allow_empty_text)
      throw ParseError(source, lineno, "empty text for id '" + id + "'");
    Id key(id);
    if (table.contains(key)) throw ParseError(source, lineno, "duplicate id '" + id + "'");
    table.add(std::move(key), std::move(text));
  }
  return table;
}

template <class Id>
std::string serialize_table(const TextTable<Id>& table) {
  std::string out;
  for (const auto& e : table.entries()) {
    if (e.text.find_first_of("\n\r") != std::string::npos)
      throw Error("text of '" + e.id.str() + "' contains a line break");
    out += e.id.str();
    out += '\t';
    out += e.text;
    out += '\n';
  }
  return out;
}

}  // namespace

// ---- Qrels -----------------------------------------------------------------

Qrels::Qrels(int threshold) : threshold_(threshold) {
  if (threshold < 1) throw Error("relevance threshold must be >= 1");
}

void Qrels::add(const QueryId& q, const DocumentId& d, int grade) {
  if (grade < 0) throw Error("negative grade for (" + q.str() + ", " + d.str() + ")");
  auto& row = table_[q];
  if (!row.emplace(d, grade).second)
    throw Error("duplicate judgment for (" + q.str() + ", " + d.str() + ")");
}

std::optional<int> Qrels::grade(const QueryId& q, const DocumentId& d) const {
  auto it = table_.find(q);
  if (it == table_.end()) return std::nullopt;
  auto jt = it->second.find(d);
  if (jt == it->second.end()) return std::nullopt;
  return jt->second;
}

bool Qrels::is_relevant(const QueryId& q, const DocumentId& d) const {
  auto g = grade(q, d);
  return g && *g >= threshold_;
}

const std::map<DocumentId, int>& Qrels::judgments(const QueryId& q) const {
  static const std::map<DocumentId, int> kEmpty;
  auto it = table_.find(q);
  return it == table_.end() ? kEmpty : it->second;
}

std::size_t Qrels::size() const {
  std::size_t n = 0;
  for (const auto& [q, row] : table_) n += row.size();
  return n;
}

// ---- rankings --------------------------------------------------------------

bool ranks_before(const ScoredDocument& a, const ScoredDocument& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc < b.doc;
}

RankedList::RankedList(QueryId query, std::vector<ScoredDocument> items)
    : query_(std::move(query)), items_(std::move(items)) {
  for (const auto& it : items_)
    if (!std::isfinite(it.score))
      throw Error("non-finite score for " + it.doc.str() + " in ranking of " + query_.str());
  std::sort(items_.begin(), items_.end(), ranks_before);
  std::set<DocumentId> seen;
  for (const auto& it : items_)
    if (!seen.insert(it.doc).second)
      throw Error("duplicate document " + it.doc.str() + " in ranking of " + query_.str());
}

RankedList RankedList::truncated(std::size_t depth) const {
  RankedList copy;
  copy.query_ = query_;
  copy.items_.assign(items_.begin(), items_.begin() + std::min(depth, items_.size()));
  return copy;
}

std::vector<DocumentId> RankedList::documents() const {
  std::vector<DocumentId> out;
  out.reserve(items_.size());
  for (const auto& it : items_) out.push_back(it.doc);
  return out;
}

void Run::add(RankedList list) {
  QueryId key = list.query();
  if (!lists.emplace(key, std::move(list)).second)
    throw Error("run already has a ranking for " + key.str());
}

void validate_triplet(const TrainingTriplet& t, const Corpus& corpus) {
  if (t.positive == t.negative)
    throw Error("triplet for " + t.query.str() + " has identical positive and negative");
  if (!corpus.contains(t.positive)) throw Error("unknown document " + t.positive.str());
  if (!corpus.contains(t.negative)) throw Error("unknown document " + t.negative.str());
}

// ---- file formats ----------------------------------------------------------

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("write failed for " + path.string());
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Corpus parse_collection_text(const std::string& content, const std::string& source,
                             CollectionOptions opts) {
  return parse_table<DocumentId>(content, source, opts);
}

QuerySet parse_queries_text(const std::string& content, const std::string& source,
                            CollectionOptions opts) {
  return parse_table<QueryId>(content, source, opts);
}

Corpus parse_collection(const std::filesystem::path& path, CollectionOptions opts) {
  return parse_collection_text(read_file(path), path.string(), opts);
}

QuerySet parse_queries(const std::filesystem::path& path, CollectionOptions opts) {
  return parse_queries_text(read_file(path), path.string(), opts);
}

std::string serialize_collection(const Corpus& corpus) { return serialize_table(corpus); }
std::string serialize_queries(const QuerySet& queries) { return serialize_table(queries); }

Qrels parse_qrels_text(const std::string& content, int threshold, const std::string& source) {
  Qrels qrels(threshold);
  auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    auto fields = split_whitespace(lines[i]);
    if (fields.empty()) continue;
    if (fields.size() != 4)
      throw ParseError(source, lineno, "expected 4 fields, got " + std::to_string(fields.size()));
    int grade = 0;
    if (!parse_number(fields[3], grade))
      throw ParseError(source, lineno, "non-integer grade '" + std::string(fields[3]) + "'");
    if (grade < 0) throw ParseError(source, lineno, "negative grade");
    QueryId q{std::string(fields[0])};
    DocumentId d{std::string(fields[2])};
    if (qrels.grade(q, d))
      throw ParseError(source, lineno,
                       "duplicate judgment for (" + q.str() + ", " + d.str() + ")");
    qrels.add(q, d, grade);
  }
  return qrels;
}

Qrels parse_qrels(const std::filesystem::path& path, int threshold) {
  return parse_qrels_text(read_file(path), threshold, path.string());
}

std::string serialize_qrels(const Qrels& qrels) {
  std::string out;
  for (const auto& [q, row] : qrels.all())
    for (const auto& [d, grade] : row)
      out += q.str() + " 0 " + d.str() + " " + std::to_string(grade) + "\n";
  return out;
}

std::string serialize_run(const Run& run) {
  if (run.tag.empty() || !QueryId::valid(run.tag)) throw Error("run tag must be a single token");
  std::string out;
  for (const auto& [q, list] : run.lists) {
    if (!(list.query() == q)) throw Error("ranking keyed by " + q.str() + " belongs to " + list.query().str());
    std::size_t rank = 1;
    for (const auto& item : list.items()) {
      out += q.str() + " Q0 " + item.doc.str() + " " + std::to_string(rank++) + " " +
             format_double(item.score) + " " + run.tag + "\n";
    }
  }
  return out;
}

Run parse_run_text(const std::string& content, const std::string& source) {
  struct Row {
    std::size_t rank;
    ScoredDocument item;
    std::size_t line;
  };
  Run run;
  std::map<QueryId, std::vector<Row>> rows;
  auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    auto f = split_whitespace(lines[i]);
    if (f.empty()) continue;
    if (f.size() != 6) throw ParseError(source, lineno, "expected 6 fields, got " + std::to_string(f.size()));
    std::size_t rank = 0;
    double score = 0;
    if (!parse_number(f[3], rank) || rank == 0) throw ParseError(source, lineno, "bad rank '" + std::string(f[3]) + "'");
    if (!parse_real(f[4], score) || !std::isfinite(score))
      throw ParseError(source, lineno, "bad score '" + std::string(f[4]) + "'");
    if (run.tag.empty()) {
      run.tag = std::string(f[5]);
    } else if (run.tag != f[5]) {
      throw ParseError(source, lineno, "mixed run tags");
    }
    rows[QueryId{std::string(f[0])}].push_back({rank, {DocumentId{std::string(f[2])}, score}, lineno});
  }
  for (auto& [q, list] : rows) {
    std::sort(list.begin(), list.end(), [](const Row& a, const Row& b) { return a.rank < b.rank; });
    std::vector<ScoredDocument> items;
    std::set<DocumentId> seen;
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i].rank != i + 1)
        throw ParseError(source, list[i].line,
                         "rank gap or duplicate for query " + q.str() + " (expected rank " +
                             std::to_string(i + 1) + ")");
      if (!seen.insert(list[i].item.doc).second)
        throw ParseError(source, list[i].line, "duplicate document " + list[i].item.doc.str());
      if (i > 0 && list[i].item.score > list[i - 1].item.score)
        throw ParseError(source, list[i].line, "scores increase with rank for query " + q.str());
      items.push_back(list[i].item);
    }
    run.add(RankedList(q, std::move(items)));
  }
  return run;
}

void write_run(const Run& run, const std::filesystem::path& path) { write_file(path, serialize_run(run)); }

Run parse_run(const std::filesystem::path& path) { return parse_run_text(read_file(path), path.string()); }

std::string serialize_triplets(const std::vector<TrainingTriplet>& triplets) {
  std::string out;
  for (const auto& t : triplets) out += t.query.str() + "\t" + t.positive.str() + "\t" + t.negative.str() + "\n";
  return out;
}

std::vector<TrainingTriplet> parse_triplets_text(const std::string& content, const std::string& source) {
  std::vector<TrainingTriplet> out;
  auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::vector<std::string> parts;
    std::string_view rest = lines[i];
    for (;;) {
      auto tab = rest.find('\t');
      parts.emplace_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (parts.size() != 3) throw ParseError(source, i + 1, "expected 3 tab-separated fields");
    for (const auto& p : parts)
      if (!QueryId::valid(p)) throw ParseError(source, i + 1, "invalid id '" + p + "'");
    if (parts[1] == parts[2]) throw ParseError(source, i + 1, "positive equals negative");
    out.push_back({QueryId{parts[0]}, DocumentId{parts[1]}, DocumentId{parts[2]}});
  }
  return out;
}

}  // namespace alrank
