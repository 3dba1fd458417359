#ifndef ALRANK_RANKER_HPP
#define ALRANK_RANKER_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alrank/datamodel.hpp"

namespace alrank {

/// Three lightweight scoring architectures over feature-hashed tokens.
///
///  cross   s = w . phi(q, d); phi hashes query-only, exact-match, overlap and
///          query-term x doc-term co-occurrence features into `dim` buckets.
///  bi      s = v(q) . v(d); v is the mean of learned token embeddings.
///  maxsim  s = sum over query tokens of max over doc tokens of e(qt) . e(dt).
///
/// bi and maxsim share one embedding table of `vocab_buckets` x `dim` rows.
enum class Architecture { cross, bi, maxsim };

std::string to_string(Architecture a);
Architecture parse_architecture(std::string_view s);

enum class WeightInit { uniform, zero };

struct RankerConfig {
  Architecture architecture = Architecture::cross;
  int dim = 256;
  int vocab_buckets = 4096;
  std::uint64_t hash_seed = 0x9e3779b9ULL;
  double learning_rate = 7e-6;
  int epochs_selection = 15;
  int epochs_evaluation = 200;
  int batch_size = 32;
  double sigma = 1.0;
  WeightInit init = WeightInit::uniform;
  bool early_stopping = false;
  int validate_every = 10;
  int patience = 3;

  void validate() const;
  /// Hash of the fields that determine weight shapes and scoring.
  std::uint64_t fingerprint() const;
};

/// Weights plus everything needed to score with them.
struct RankerState {
  Architecture architecture = Architecture::cross;
  int dim = 0;
  int vocab_buckets = 0;
  std::uint64_t hash_seed = 0;
  std::uint64_t steps = 0;
  std::uint64_t config_fingerprint = 0;
  /// cross: dim values; bi/maxsim: vocab_buckets rows of dim values.
  std::vector<double> weights;

  std::vector<std::size_t> shape() const;
  friend bool operator==(const RankerState&, const RankerState&) = default;
};

/// Fresh weights: uniform in [-1/sqrt(dim), 1/sqrt(dim)] from `seed`, or zeros.
RankerState initialize_ranker(const RankerConfig& config, std::uint64_t seed);

/// Token hashes of a text under a state's hash seed.
struct EncodedText {
  std::vector<std::uint64_t> tokens;
};
EncodedText encode_text(const RankerState& state, std::string_view text);

/// Sparse cross-architecture features as (bucket, value), merged and sorted by
/// bucket. Empty when either side is empty.
std::vector<std::pair<std::uint32_t, double>> cross_features(const RankerState& state, const EncodedText& query,
                                                              const EncodedText& doc);
/// Query-only part of the cross features.
std::vector<std::pair<std::uint32_t, double>> cross_query_features(const RankerState& state,
                                                                    const EncodedText& query);

double score(const RankerState& state, std::string_view query, std::string_view doc);
double score_encoded(const RankerState& state, const EncodedText& query, const EncodedText& doc);

std::vector<double> encode_query(const RankerState& state, std::string_view query);

/// Reorders the candidate documents by ranker score, docid tie-break.
RankedList rerank(const RankerState& state, std::string_view query_text, const RankedList& candidates,
                  const Corpus& corpus);

/// Exhaustive dot-product retrieval over the whole corpus (bi architecture):
/// document vectors are computed once, then scored against the query vector.
RankedList dense_retrieve(const RankerState& state, const QueryId& query, std::string_view query_text,
                          const Corpus& corpus);

// ---- loss and training ------------------------------------------------------

struct PairLoss {
  double loss;
  double grad_pos;  // dL/ds_pos
  double grad_neg;  // dL/ds_neg
};

/// RankNet: L = ln(1 + exp(-sigma (s_pos - s_neg))), overflow-safe.
PairLoss ranknet_loss(double s_pos, double s_neg, double sigma);

/// Triplet with both texts resolved and encoded.
struct EncodedTriplet {
  EncodedText query;
  EncodedText positive;
  EncodedText negative;
};

std::vector<EncodedTriplet> encode_triplets(const RankerState& state, std::span<const TrainingTriplet> triplets,
                                            const QuerySet& queries, const Corpus& corpus);

/// Mean RankNet loss over the triplets and its gradient with respect to every
/// weight (dense, same layout as RankerState::weights).
double batch_loss_and_gradient(const RankerState& state, std::span<const EncodedTriplet> batch, double sigma,
                               std::vector<double>* gradient);

struct TrainOptions {
  int epochs = 1;
  std::uint64_t seed = 0;
  /// Called with a candidate state when early stopping is on; higher is better.
  std::function<double(const RankerState&)> validator;
};

struct TrainResult {
  RankerState state;
  std::vector<double> epoch_losses;  // mean batch loss seen during each epoch
  int epochs_run = 0;
};

/// Mini-batch SGD on the mean RankNet loss. Batches are drawn from a seeded
/// shuffle each epoch. The input state is not modified.
TrainResult train(const RankerState& state, const RankerConfig& config, std::span<const TrainingTriplet> triplets,
                  const QuerySet& queries, const Corpus& corpus, const TrainOptions& options);

// Layout, little-endian:
//   "ALRKCKPT" | u32 version | str architecture | u32 dim | u32 vocab_buckets
//   u64 hash_seed | u64 steps | u64 config fingerprint | u32 array count
//   per array: str name | u32 rank | rank x u64 dims | f64 data
// str = u32 length + bytes.
void save_checkpoint(const RankerState& state, const std::filesystem::path& path);
/// When `expected` is given, its architecture and dimensions must match.
RankerState load_checkpoint(const std::filesystem::path& path, const RankerConfig* expected = nullptr);

}  // namespace alrank

#endif  // ALRANK_RANKER_HPP
