#ifndef ALRANK_EXPERIMENT_HPP
#define ALRANK_EXPERIMENT_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "alrank/annotation.hpp"
#include "alrank/budget.hpp"
#include "alrank/datamodel.hpp"
#include "alrank/evaluation.hpp"
#include "alrank/lexical.hpp"
#include "alrank/ranker.hpp"
#include "alrank/selection.hpp"
#include "alrank/synthetic.hpp"

namespace alrank {

enum class Scenario { scratch, retrain };
std::string to_string(Scenario s);
Scenario parse_scenario(std::string_view s);

struct ExperimentConfig {
  Scenario scenario = Scenario::scratch;
  std::string initial_checkpoint;  // required for retrain
  int iterations = 5;
  /// Additions per iteration; empty means `iterations` x selection.batch_size.
  std::vector<int> schedule;
  SelectionConfig selection;
  RankerConfig ranker;
  CostConfig cost;
  Bm25Params bm25;
  int relevance_threshold = 1;
  std::uint64_t seed = 42;
  int random_repeats = 4;
  int annotation_depth = 100;  // ranking walked for the positive
  int negative_depth = 1000;   // BM25 depth negatives are drawn from
  bool exclude_relevant_negatives = true;
  bool return_exhausted_to_pool = false;
  int eval_k = 10;
  Gain gain = Gain::linear;
  std::vector<int> variability_sizes{25, 50, 100, 200};
  SyntheticSpec synthetic;
  /// Strategies run by run_suite. Random always runs `random_repeats` times.
  std::vector<Strategy> strategies{Strategy::random, Strategy::uncertainty, Strategy::qbc, Strategy::diversity};
  /// Data files; all empty means the synthetic bundle is generated from `synthetic`.
  std::string corpus_path;
  std::string train_queries_path;
  std::string test_queries_path;
  std::string qrels_path;
  /// Fraction of training queries held out for early stopping (only when enabled).
  double validation_fraction = 0.1;

  /// Desk-scale preset: small epochs and a learning rate suited to the
  /// hashed rankers. "paper" keeps the published protocol values.
  static ExperimentConfig profile(std::string_view name);

  void validate() const;
  std::vector<int> resolved_schedule() const;
  /// Flat key/value document; every key is accepted by `set`.
  nlohmann::ordered_json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  /// Applies the document's keys on top of `base`.
  static ExperimentConfig from_json(const nlohmann::json& j, ExperimentConfig base);
  /// Applies one override, e.g. ("ranker.dim", "64"). Throws on unknown keys.
  void set(const std::string& key, const std::string& value);
  std::uint64_t fingerprint() const;
};

/// Everything an experiment reads. BM25 runs are computed once up front.
struct DataBundle {
  Corpus corpus;
  QuerySet train;
  QuerySet test;
  Qrels qrels;
  InvertedIndex index;
  Run train_candidates;  // BM25 top-max(negative_depth, annotation_depth, K) per train query
  Run test_candidates;   // BM25 top-K per test query

  static DataBundle prepare(Corpus corpus, QuerySet train, QuerySet test, Qrels qrels, const ExperimentConfig& config);
  /// Synthetic bundle or the configured files.
  static DataBundle load(const ExperimentConfig& config);
};

struct IterationState {
  std::string run_name;
  int iteration = 0;
  std::vector<QueryId> selected;
  std::vector<ScoredPair> selected_pairs;     // uncertainty only
  std::vector<TrainingTriplet> annotated;     // D after this iteration
  std::vector<QueryId> annotated_queries;     // queries removed from the pool so far
  std::vector<QueryId> pool;                  // T \ D, sorted
  AssessmentLedger ledger;
  TimeLedger time;
  IterationOutcome outcome;
  std::string stop_reason;  // non-empty when the run ended early
  RankerState selector;     // E_sel ranker used by the next selection

  nlohmann::ordered_json to_json() const;
  static IterationState from_json(const nlohmann::json& j);
  friend bool operator==(const IterationState&, const IterationState&) = default;
};

struct RunOptions {
  Strategy strategy = Strategy::random;
  int repeat = 0;
  /// When set, every iteration is persisted under state_dir/run_name.
  std::optional<std::filesystem::path> state_dir;
  /// Stop after this many iterations in total (simulated interruption).
  std::optional<int> stop_after;
};

std::string run_name(Strategy strategy, int repeat);
/// Seed of one run. Repeat 0 uses the master seed, so every strategy shares
/// the first random selection.
std::uint64_t run_seed(std::uint64_t master, int repeat);

/// The starting point of every training in the run: seeded init (scratch) or
/// the loaded checkpoint (retrain).
RankerState scenario_start(const ExperimentConfig& config, std::uint64_t seed);

/// Mean nDCG over the test queries of a ranker reranking BM25 candidates.
MetricResult evaluate_ranker(const RankerState& ranker, const DataBundle& data, const ExperimentConfig& config);
MetricResult evaluate_bm25(const DataBundle& data, const ExperimentConfig& config);

std::vector<IterationState> run_experiment(const ExperimentConfig& config, const DataBundle& data,
                                           const RunOptions& options);

/// Continues a persisted run. Throws if the stored config fingerprint differs.
/// A completed run is returned unchanged.
std::vector<IterationState> resume(const ExperimentConfig& config, const DataBundle& data, const RunOptions& options);

/// Loads every persisted iteration of a run.
std::vector<IterationState> load_states(const std::filesystem::path& run_dir);

std::vector<VariabilityRecord> run_variability(const ExperimentConfig& config, const DataBundle& data,
                                               const std::vector<int>& sizes, int repeats);

/// Stores records as out_dir/variability.json, where reports pick them up.
void write_variability(const std::vector<VariabilityRecord>& records, const std::filesystem::path& out_dir);

StrategyCurve to_curve(const std::vector<IterationState>& states, Strategy strategy, int repeat, std::uint64_t seed);

/// Runs the random baseline `random_repeats` times plus each other strategy
/// of config.strategies, persisting under out_dir, and writes reports to
/// out_dir/reports.
ReportInputs run_suite(const ExperimentConfig& config, const DataBundle& data, const std::filesystem::path& out_dir,
                       std::optional<int> stop_after = std::nullopt);

/// Rebuilds report inputs from a suite directory (runs, baselines.json,
/// variability.json when present).
ReportInputs load_report_inputs(const std::filesystem::path& out_dir);

/// Writes config.json with the fingerprint, or checks an existing one.
void write_or_check_config(const ExperimentConfig& config, const std::filesystem::path& out_dir);
/// Continues every unfinished run of a suite directory and re-emits reports.
ReportInputs resume_suite(const ExperimentConfig& config, const DataBundle& data, const std::filesystem::path& out_dir);
ExperimentConfig read_config(const std::filesystem::path& out_dir);

}  // namespace alrank

#endif  // ALRANK_EXPERIMENT_HPP
