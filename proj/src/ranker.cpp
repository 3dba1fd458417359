#include "alrank/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "alrank/lexical.hpp"
#include "binary_io.hpp"

namespace alrank {

namespace {

constexpr char kCheckpointMagic[8] = {'A', 'L', 'R', 'K', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

// Feature-family salts for the cross architecture.
constexpr std::uint64_t kQuerySalt = 0x51a7e0ULL;
constexpr std::uint64_t kMatchSalt = 0x3a7c4ULL;
constexpr std::uint64_t kPairSalt = 0x9a1fULL;
constexpr std::uint64_t kOverlapSalt = 0x0e1a9ULL;
constexpr std::uint64_t kTfSalt = 0x7f5ULL;

using SparseFeatures = std::vector<std::pair<std::uint32_t, double>>;

std::uint32_t bucket(const RankerState& s, std::uint64_t key) {
  return static_cast<std::uint32_t>(splitmix64(key ^ s.hash_seed) % static_cast<std::uint64_t>(s.dim));
}

std::size_t row_of(const RankerState& s, std::uint64_t token) {
  return static_cast<std::size_t>(splitmix64(token) % static_cast<std::uint64_t>(s.vocab_buckets));
}

const double* row_ptr(const RankerState& s, std::size_t row) { return s.weights.data() + row * s.dim; }

double dot(const double* a, const double* b, int n) {
  double acc = 0;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

SparseFeatures merge(SparseFeatures f) {
  std::stable_sort(f.begin(), f.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseFeatures out;
  for (const auto& [b, v] : f) {
    if (!out.empty() && out.back().first == b) {
      out.back().second += v;
    } else {
      out.emplace_back(b, v);
    }
  }
  return out;
}

std::vector<std::uint64_t> unique_in_order(const std::vector<std::uint64_t>& tokens) {
  std::vector<std::uint64_t> out;
  for (auto t : tokens)
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  return out;
}

void append_query_features(const RankerState& s, const EncodedText& q, SparseFeatures& f) {
  const double inv = 1.0 / static_cast<double>(q.tokens.size());
  for (auto t : q.tokens) f.emplace_back(bucket(s, t * 0x100000001b3ULL ^ kQuerySalt), inv);
}

/// Mean of embedding rows of the tokens; zero vector for empty input.
std::vector<double> mean_embedding(const RankerState& s, const EncodedText& text) {
  std::vector<double> v(s.dim, 0.0);
  if (text.tokens.empty()) return v;
  for (auto t : text.tokens) {
    const double* e = row_ptr(s, row_of(s, t));
    for (int i = 0; i < s.dim; ++i) v[i] += e[i];
  }
  const double inv = 1.0 / static_cast<double>(text.tokens.size());
  for (auto& x : v) x *= inv;
  return v;
}

/// For each query token position, the doc row with the largest dot product
/// (first on ties) and that dot product.
struct MaxSimMatch {
  std::size_t query_row;
  std::size_t doc_row;
  double value;
};

std::vector<MaxSimMatch> maxsim_matches(const RankerState& s, const EncodedText& q, const EncodedText& d) {
  std::vector<std::size_t> doc_rows;
  for (auto t : d.tokens) {
    auto r = row_of(s, t);
    if (std::find(doc_rows.begin(), doc_rows.end(), r) == doc_rows.end()) doc_rows.push_back(r);
  }
  std::vector<MaxSimMatch> out;
  out.reserve(q.tokens.size());
  for (auto t : q.tokens) {
    const std::size_t qr = row_of(s, t);
    MaxSimMatch best{qr, doc_rows.front(), -std::numeric_limits<double>::infinity()};
    for (auto dr : doc_rows) {
      double v = dot(row_ptr(s, qr), row_ptr(s, dr), s.dim);
      if (v > best.value) {
        best.doc_row = dr;
        best.value = v;
      }
    }
    out.push_back(best);
  }
  return out;
}

/// Gradient sink that remembers which embedding rows it touched so training
/// can apply and clear only those.
class GradientBuffer {
 public:
  GradientBuffer(std::size_t size, std::size_t row_size)
      : values_(size, 0.0), row_size_(row_size), marked_(size / row_size, 0) {}

  void add(std::size_t offset, double v) {
    mark(offset / row_size_);
    values_[offset] += v;
  }
  void add_row(std::size_t row, const double* v, double scale) {
    mark(row);
    double* g = values_.data() + row * row_size_;
    for (std::size_t i = 0; i < row_size_; ++i) g[i] += scale * v[i];
  }
  void apply_and_clear(std::vector<double>& weights, double lr) {
    std::sort(rows_.begin(), rows_.end());
    for (auto r : rows_) {
      for (std::size_t i = r * row_size_; i < (r + 1) * row_size_; ++i) {
        weights[i] -= lr * values_[i];
        values_[i] = 0;
      }
      marked_[r] = 0;
    }
    rows_.clear();
  }
  std::vector<double>& values() { return values_; }

 private:
  void mark(std::size_t row) {
    if (!marked_[row]) {
      marked_[row] = 1;
      rows_.push_back(row);
    }
  }
  std::vector<double> values_;
  std::size_t row_size_;
  std::vector<char> marked_;
  std::vector<std::size_t> rows_;
};

// cross weights form a single row.
std::size_t row_size(const RankerState& s) { return static_cast<std::size_t>(s.dim); }

/// Adds scale * ds/dweights into the buffer.
void accumulate_score_gradient(const RankerState& s, const EncodedText& q, const EncodedText& d, double scale,
                               GradientBuffer& g) {
  if (q.tokens.empty() || d.tokens.empty() || scale == 0) return;
  switch (s.architecture) {
    case Architecture::cross:
      for (const auto& [b, v] : cross_features(s, q, d)) g.add(b, scale * v);
      break;
    case Architecture::bi: {
      auto vq = mean_embedding(s, q);
      auto vd = mean_embedding(s, d);
      const double sq = scale / static_cast<double>(q.tokens.size());
      const double sd = scale / static_cast<double>(d.tokens.size());
      for (auto t : q.tokens) g.add_row(row_of(s, t), vd.data(), sq);
      for (auto t : d.tokens) g.add_row(row_of(s, t), vq.data(), sd);
      break;
    }
    case Architecture::maxsim: {
      // Rows are read before any update, so copies are not needed.
      for (const auto& m : maxsim_matches(s, q, d)) {
        g.add_row(m.query_row, row_ptr(s, m.doc_row), scale);
        g.add_row(m.doc_row, row_ptr(s, m.query_row), scale);
      }
      break;
    }
  }
}

double accumulate_batch(const RankerState& s, std::span<const EncodedTriplet> batch, double sigma,
                        GradientBuffer& g) {
  if (batch.empty()) return 0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0;
  for (const auto& t : batch) {
    const double sp = score_encoded(s, t.query, t.positive);
    const double sn = score_encoded(s, t.query, t.negative);
    auto l = ranknet_loss(sp, sn, sigma);
    total += l.loss;
    accumulate_score_gradient(s, t.query, t.positive, l.grad_pos * inv, g);
    accumulate_score_gradient(s, t.query, t.negative, l.grad_neg * inv, g);
  }
  return total * inv;
}

}  // namespace

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::cross:
      return "cross";
    case Architecture::bi:
      return "bi";
    case Architecture::maxsim:
      return "maxsim";
  }
  return "?";
}

Architecture parse_architecture(std::string_view s) {
  if (s == "cross") return Architecture::cross;
  if (s == "bi") return Architecture::bi;
  if (s == "maxsim") return Architecture::maxsim;
  throw Error("unknown architecture '" + std::string(s) + "' (expected cross, bi or maxsim)");
}

void RankerConfig::validate() const {
  if (dim < 1) throw Error("ranker: dim must be >= 1");
  if (vocab_buckets < 1) throw Error("ranker: vocab_buckets must be >= 1");
  if (!(learning_rate > 0)) throw Error("ranker: learning rate must be > 0");
  if (epochs_selection < 1 || epochs_evaluation < 1) throw Error("ranker: epochs must be >= 1");
  if (epochs_selection > epochs_evaluation)
    throw Error("ranker: selection epochs must not exceed evaluation epochs");
  if (batch_size < 1) throw Error("ranker: batch size must be >= 1");
  if (!(sigma > 0)) throw Error("ranker: sigma must be > 0");
  if (validate_every < 1 || patience < 1) throw Error("ranker: early-stopping settings must be >= 1");
}

std::uint64_t RankerConfig::fingerprint() const {
  std::string key = to_string(architecture) + "|" + std::to_string(dim) + "|" +
                    (architecture == Architecture::cross ? std::string("-") : std::to_string(vocab_buckets)) +
                    "|" + std::to_string(hash_seed);
  return fnv1a(key);
}

std::vector<std::size_t> RankerState::shape() const {
  if (architecture == Architecture::cross) return {static_cast<std::size_t>(dim)};
  return {static_cast<std::size_t>(vocab_buckets), static_cast<std::size_t>(dim)};
}

RankerState initialize_ranker(const RankerConfig& config, std::uint64_t seed) {
  config.validate();
  RankerState s;
  s.architecture = config.architecture;
  s.dim = config.dim;
  s.vocab_buckets = config.architecture == Architecture::cross ? 0 : config.vocab_buckets;
  s.hash_seed = config.hash_seed;
  s.config_fingerprint = config.fingerprint();
  std::size_t n = 1;
  for (auto d : s.shape()) n *= d;
  s.weights.assign(n, 0.0);
  if (config.init == WeightInit::uniform) {
    Rng rng(seed);
    const double r = 1.0 / std::sqrt(static_cast<double>(config.dim));
    for (auto& w : s.weights) w = uniform_real(rng, -r, r);
  }
  return s;
}

EncodedText encode_text(const RankerState& state, std::string_view text) {
  EncodedText e;
  const std::uint64_t basis = splitmix64(state.hash_seed);
  for (const auto& tok : tokenize(text)) e.tokens.push_back(fnv1a(tok, basis));
  return e;
}

std::vector<std::pair<std::uint32_t, double>> cross_query_features(const RankerState& state,
                                                                    const EncodedText& query) {
  SparseFeatures f;
  if (query.tokens.empty()) return f;
  append_query_features(state, query, f);
  return merge(std::move(f));
}

std::vector<std::pair<std::uint32_t, double>> cross_features(const RankerState& state, const EncodedText& query,
                                                              const EncodedText& doc) {
  SparseFeatures f;
  if (query.tokens.empty() || doc.tokens.empty()) return f;
  append_query_features(state, query, f);

  const auto uq = unique_in_order(query.tokens);
  const auto ud = unique_in_order(doc.tokens);
  std::unordered_map<std::uint64_t, int> tf;
  for (auto t : doc.tokens) ++tf[t];

  const double inv_q = 1.0 / static_cast<double>(uq.size());
  double matched = 0;
  double tf_total = 0;
  for (auto t : uq) {
    auto it = tf.find(t);
    if (it == tf.end()) continue;
    matched += 1;
    tf_total += it->second;
    f.emplace_back(bucket(state, t ^ kMatchSalt), std::log1p(it->second) * inv_q);
  }
  f.emplace_back(bucket(state, kOverlapSalt), matched * inv_q);
  f.emplace_back(bucket(state, kTfSalt), std::log1p(tf_total));

  const double pair_w = 1.0 / std::sqrt(static_cast<double>(uq.size() * ud.size()));
  for (auto qt : uq)
    for (auto dt : ud) f.emplace_back(bucket(state, splitmix64(qt ^ kPairSalt) ^ dt), pair_w);
  return merge(std::move(f));
}

double score_encoded(const RankerState& s, const EncodedText& q, const EncodedText& d) {
  if (q.tokens.empty() || d.tokens.empty()) return 0;
  switch (s.architecture) {
    case Architecture::cross: {
      double acc = 0;
      for (const auto& [b, v] : cross_features(s, q, d)) acc += s.weights[b] * v;
      return acc;
    }
    case Architecture::bi: {
      auto vq = mean_embedding(s, q);
      auto vd = mean_embedding(s, d);
      return dot(vq.data(), vd.data(), s.dim);
    }
    case Architecture::maxsim: {
      double acc = 0;
      for (const auto& m : maxsim_matches(s, q, d)) acc += m.value;
      return acc;
    }
  }
  return 0;
}

double score(const RankerState& state, std::string_view query, std::string_view doc) {
  return score_encoded(state, encode_text(state, query), encode_text(state, doc));
}

std::vector<double> encode_query(const RankerState& state, std::string_view query) {
  const auto q = encode_text(state, query);
  if (state.architecture != Architecture::cross) return mean_embedding(state, q);
  std::vector<double> v(state.dim, 0.0);
  for (const auto& [b, x] : cross_query_features(state, q)) v[b] = x * state.weights[b];
  return v;
}

RankedList rerank(const RankerState& state, std::string_view query_text, const RankedList& candidates,
                  const Corpus& corpus) {
  const auto q = encode_text(state, query_text);
  std::vector<ScoredDocument> items;
  items.reserve(candidates.size());
  for (const auto& c : candidates.items())
    items.push_back({c.doc, score_encoded(state, q, encode_text(state, corpus.text(c.doc)))});
  return RankedList(candidates.query(), std::move(items));
}

RankedList dense_retrieve(const RankerState& state, const QueryId& query, std::string_view query_text,
                          const Corpus& corpus) {
  if (state.architecture != Architecture::bi) throw Error("dense retrieval requires the bi architecture");
  std::vector<std::vector<double>> doc_vectors(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    doc_vectors[i] = mean_embedding(state, encode_text(state, corpus[i].text));
  });
  const auto q = encode_text(state, query_text);
  const auto vq = mean_embedding(state, q);
  std::vector<ScoredDocument> items;
  items.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const bool empty = q.tokens.empty() || encode_text(state, corpus[i].text).tokens.empty();
    items.push_back({corpus[i].id, empty ? 0.0 : dot(vq.data(), doc_vectors[i].data(), state.dim)});
  }
  return RankedList(query, std::move(items));
}

// ---- loss and training ------------------------------------------------------

PairLoss ranknet_loss(double s_pos, double s_neg, double sigma) {
  const double x = -sigma * (s_pos - s_neg);
  // softplus(x) and its derivative sigmoid(x), both without overflow.
  const double loss = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  const double sig = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return {loss, -sigma * sig, sigma * sig};
}

std::vector<EncodedTriplet> encode_triplets(const RankerState& state, std::span<const TrainingTriplet> triplets,
                                            const QuerySet& queries, const Corpus& corpus) {
  std::vector<EncodedTriplet> out;
  out.reserve(triplets.size());
  for (const auto& t : triplets) {
    validate_triplet(t, corpus);
    if (!queries.contains(t.query)) throw Error("triplet references unknown query " + t.query.str());
    out.push_back({encode_text(state, queries.text(t.query)), encode_text(state, corpus.text(t.positive)),
                   encode_text(state, corpus.text(t.negative))});
  }
  return out;
}

double batch_loss_and_gradient(const RankerState& state, std::span<const EncodedTriplet> batch, double sigma,
                               std::vector<double>* gradient) {
  GradientBuffer g(state.weights.size(), row_size(state));
  const double loss = accumulate_batch(state, batch, sigma, g);
  if (gradient) *gradient = std::move(g.values());
  return loss;
}

TrainResult train(const RankerState& state, const RankerConfig& config, std::span<const TrainingTriplet> triplets,
                  const QuerySet& queries, const Corpus& corpus, const TrainOptions& options) {
  if (triplets.empty()) throw Error("train: no triplets");
  if (options.epochs < 1) throw Error("train: epochs must be >= 1");
  if (state.architecture != config.architecture || state.dim != config.dim)
    throw Error("train: state does not match ranker config");

  TrainResult result{state, {}, 0};
  RankerState& s = result.state;
  const auto encoded = encode_triplets(s, triplets, queries, corpus);
  std::vector<std::size_t> order(encoded.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(options.seed);
  GradientBuffer g(s.weights.size(), row_size(s));
  std::vector<EncodedTriplet> batch;
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);

  const bool early = config.early_stopping && options.validator;
  std::optional<RankerState> best;
  double best_value = -std::numeric_limits<double>::infinity();
  int stale = 0;

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) batch.push_back(encoded[order[i]]);
      loss_sum += accumulate_batch(s, batch, config.sigma, g);
      g.apply_and_clear(s.weights, config.learning_rate);
      ++s.steps;
      ++batches;
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
    result.epochs_run = epoch;

    if (early && epoch % config.validate_every == 0) {
      const double value = options.validator(s);
      if (value > best_value) {
        best_value = value;
        best = s;
        stale = 0;
      } else if (++stale >= config.patience) {
        break;
      }
    }
  }
  if (early && best) result.state = *best;
  return result;
}

// ---- checkpoints ------------------------------------------------------------

void save_checkpoint(const RankerState& state, const std::filesystem::path& path) {
  detail::BinaryWriter w;
  w.put_raw(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_string(to_string(state.architecture));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(state.dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(state.vocab_buckets));
  w.put<std::uint64_t>(state.hash_seed);
  w.put<std::uint64_t>(state.steps);
  w.put<std::uint64_t>(state.config_fingerprint);
  w.put<std::uint32_t>(1);
  w.put_string(state.architecture == Architecture::cross ? "w" : "embeddings");
  const auto shape = state.shape();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.put<std::uint64_t>(d);
  for (double v : state.weights) w.put<double>(v);
  write_file(path, w.bytes());
}

RankerState load_checkpoint(const std::filesystem::path& path, const RankerConfig* expected) {
  detail::BinaryReader r(read_file(path), path.string());
  if (r.get_raw(sizeof kCheckpointMagic) != std::string_view(kCheckpointMagic, sizeof kCheckpointMagic))
    throw Error(path.string() + ": not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  RankerState s;
  s.architecture = parse_architecture(r.get_string());
  s.dim = static_cast<int>(r.get<std::uint32_t>());
  s.vocab_buckets = static_cast<int>(r.get<std::uint32_t>());
  s.hash_seed = r.get<std::uint64_t>();
  s.steps = r.get<std::uint64_t>();
  s.config_fingerprint = r.get<std::uint64_t>();
  if (r.get<std::uint32_t>() != 1) throw Error(path.string() + ": expected exactly one weight array");
  r.get_string();
  const auto rank = r.get<std::uint32_t>();
  std::vector<std::size_t> shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.get<std::uint64_t>());
  if (shape != s.shape()) throw Error(path.string() + ": weight shape does not match architecture");
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  s.weights.resize(n);
  for (auto& v : s.weights) v = r.get<double>();
  if (!r.at_end()) throw Error(path.string() + ": trailing bytes");

  if (expected) {
    if (expected->architecture != s.architecture)
      throw Error(path.string() + ": checkpoint architecture '" + to_string(s.architecture) +
                  "' does not match configured '" + to_string(expected->architecture) + "'");
    if (expected->fingerprint() != s.config_fingerprint)
      throw Error(path.string() + ": checkpoint dimensions or hash seed differ from the ranker config");
  }
  return s;
}

}  // namespace alrank
