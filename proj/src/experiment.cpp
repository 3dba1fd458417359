#include "alrank/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

namespace alrank {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string to_string(Scenario s) { return s == Scenario::scratch ? "scratch" : "retrain"; }

Scenario parse_scenario(std::string_view s) {
  if (s == "scratch") return Scenario::scratch;
  if (s == "retrain" || s == "re-train") return Scenario::retrain;
  throw Error("unknown scenario '" + std::string(s) + "' (expected scratch or retrain)");
}

// ---- configuration ------------------------------------------------------------

namespace {

int as_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    long long x = std::stoll(v, &used);
    if (used == v.size() && x >= INT32_MIN && x <= INT32_MAX) return static_cast<int>(x);
  } catch (const std::exception&) {
  }
  throw Error("config: '" + key + "' expects an integer, got '" + v + "'");
}

std::uint64_t as_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      unsigned long long x = std::stoull(v, &used, 0);
      if (used == v.size()) return x;
    }
  } catch (const std::exception&) {
  }
  throw Error("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
}

double as_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw Error("config: '" + key + "' expects a number, got '" + v + "'");
}

bool as_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config: '" + key + "' expects true or false, got '" + v + "'");
}

/// Accepts a JSON array or a comma-separated list.
std::vector<std::string> as_list(const std::string& v) {
  std::vector<std::string> out;
  std::string body = v;
  if (!body.empty() && body.front() == '[') {
    json j = json::parse(body);
    for (const auto& e : j) out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
    return out;
  }
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<int> as_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& s : as_list(v)) out.push_back(as_int(key, s));
  return out;
}

std::vector<Strategy> as_strategies(const std::string& v) {
  if (v == "all") return {Strategy::random, Strategy::uncertainty, Strategy::qbc, Strategy::diversity};
  std::vector<Strategy> out;
  for (const auto& s : as_list(v)) {
    if (s == "all") return as_strategies("all");
    const Strategy st = parse_strategy(s);
    if (std::find(out.begin(), out.end(), st) == out.end()) out.push_back(st);
  }
  return out;
}

std::string gain_name(Gain g) { return g == Gain::linear ? "linear" : "exponential"; }

Gain parse_gain(const std::string& v) {
  if (v == "linear") return Gain::linear;
  if (v == "exponential") return Gain::exponential;
  throw Error("config: gain must be linear or exponential, got '" + v + "'");
}

std::string init_name(WeightInit w) { return w == WeightInit::uniform ? "uniform" : "zero"; }

WeightInit parse_init(const std::string& v) {
  if (v == "uniform") return WeightInit::uniform;
  if (v == "zero") return WeightInit::zero;
  throw Error("config: ranker.init must be uniform or zero, got '" + v + "'");
}

std::string value_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object() && key != "cost.selection_hours")
      flatten(*it, key, out);
    else if (it->is_object())
      for (auto jt = it->begin(); jt != it->end(); ++jt) out.emplace_back(key + "." + jt.key(), value_text(*jt));
    else
      out.emplace_back(key, value_text(*it));
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::profile(std::string_view name) {
  ExperimentConfig c;
  if (name == "paper" || name == "default") return c;
  if (name != "desk") throw Error("unknown profile '" + std::string(name) + "' (expected desk or paper)");
  c.ranker.learning_rate = 0.002;
  c.ranker.epochs_selection = 5;
  c.ranker.epochs_evaluation = 50;
  c.ranker.batch_size = 16;
  c.ranker.dim = 256;
  c.ranker.vocab_buckets = 4096;
  c.ranker.validate_every = 5;
  c.iterations = 5;
  c.selection.batch_size = 20;
  return c;
}

void ExperimentConfig::validate() const {
  if (iterations < 1) throw Error("config: iterations must be >= 1");
  if (!schedule.empty() && static_cast<int>(schedule.size()) != iterations)
    throw Error("config: schedule has " + std::to_string(schedule.size()) + " entries but iterations is " +
                std::to_string(iterations));
  for (int s : schedule)
    if (s < 1) throw Error("config: schedule entries must be >= 1");
  if (scenario == Scenario::retrain && initial_checkpoint.empty())
    throw Error("config: scenario retrain requires initial_checkpoint");
  if (random_repeats < 1) throw Error("config: random_repeats must be >= 1");
  if (annotation_depth < 1) throw Error("config: annotation_depth must be >= 1");
  if (negative_depth < 2) throw Error("config: negative_depth must be >= 2");
  if (eval_k < 1) throw Error("config: eval_k must be >= 1");
  if (!(validation_fraction > 0 && validation_fraction < 1)) throw Error("config: validation_fraction must be in (0, 1)");
  if (strategies.empty()) throw Error("config: strategies must not be empty");
  for (int s : variability_sizes)
    if (s < 1) throw Error("config: variability_sizes entries must be >= 1");
  const int files = !corpus_path.empty() + !train_queries_path.empty() + !test_queries_path.empty() + !qrels_path.empty();
  if (files != 0 && files != 4) {
    for (auto [key, value] : {std::pair{"corpus_path", &corpus_path}, {"train_queries_path", &train_queries_path},
                              {"test_queries_path", &test_queries_path}, {"qrels_path", &qrels_path}})
      if (value->empty()) throw Error(std::string("config: missing ") + key);
  }
  selection.validate();
  ranker.validate();
  cost.validate();
  synthetic.validate();
}

std::vector<int> ExperimentConfig::resolved_schedule() const {
  if (!schedule.empty()) return schedule;
  return std::vector<int>(static_cast<std::size_t>(iterations), selection.batch_size);
}

ojson ExperimentConfig::to_json() const {
  ojson j;
  j["scenario"] = to_string(scenario);
  j["initial_checkpoint"] = initial_checkpoint;
  j["iterations"] = iterations;
  j["schedule"] = schedule;
  j["seed"] = seed;
  j["random_repeats"] = random_repeats;
  j["annotation_depth"] = annotation_depth;
  j["negative_depth"] = negative_depth;
  j["exclude_relevant_negatives"] = exclude_relevant_negatives;
  j["return_exhausted_to_pool"] = return_exhausted_to_pool;
  j["relevance_threshold"] = relevance_threshold;
  j["eval_k"] = eval_k;
  j["gain"] = gain_name(gain);
  j["variability_sizes"] = variability_sizes;
  std::vector<std::string> names;
  for (auto s : strategies) names.push_back(to_string(s));
  j["strategies"] = names;
  j["validation_fraction"] = validation_fraction;
  j["corpus_path"] = corpus_path;
  j["train_queries_path"] = train_queries_path;
  j["test_queries_path"] = test_queries_path;
  j["qrels_path"] = qrels_path;
  j["selection.batch_size"] = selection.batch_size;
  j["selection.candidate_depth"] = selection.candidate_depth;
  j["selection.committee_size"] = selection.committee_size;
  j["selection.member_fraction"] = selection.member_fraction;
  j["selection.entropy_pair_depth"] = selection.entropy_pair_depth;
  j["selection.kmeans_max_iters"] = selection.kmeans_max_iters;
  j["selection.one_pair_per_query"] = selection.one_pair_per_query;
  j["ranker.architecture"] = to_string(ranker.architecture);
  j["ranker.dim"] = ranker.dim;
  j["ranker.vocab_buckets"] = ranker.vocab_buckets;
  j["ranker.hash_seed"] = ranker.hash_seed;
  j["ranker.learning_rate"] = ranker.learning_rate;
  j["ranker.epochs_selection"] = ranker.epochs_selection;
  j["ranker.epochs_evaluation"] = ranker.epochs_evaluation;
  j["ranker.batch_size"] = ranker.batch_size;
  j["ranker.sigma"] = ranker.sigma;
  j["ranker.init"] = init_name(ranker.init);
  j["ranker.early_stopping"] = ranker.early_stopping;
  j["ranker.validate_every"] = ranker.validate_every;
  j["ranker.patience"] = ranker.patience;
  j["bm25.k1"] = bm25.k1;
  j["bm25.b"] = bm25.b;
  j["cost.assessments_per_hour"] = cost.assessments_per_hour;
  j["cost.annotator_cost_per_hour"] = cost.annotator_cost_per_hour;
  j["cost.gpu_cost_per_hour"] = cost.gpu_cost_per_hour;
  j["cost.cpu_cost_per_hour"] = cost.cpu_cost_per_hour;
  for (const auto& [s, h] : cost.selection_hours) j["cost.selection_hours." + to_string(s)] = h;
  j["cost.measured_selection_hours"] = cost.measured_selection_hours;
  j["cost.measured_training_hours"] = cost.measured_training_hours;
  j["cost.training_hours_per_triplet_epoch"] = cost.training_hours_per_triplet_epoch;
  j["synthetic.topics"] = synthetic.topics;
  j["synthetic.docs_per_topic"] = synthetic.docs_per_topic;
  j["synthetic.noise_vocab"] = synthetic.noise_vocab;
  j["synthetic.topic_vocab"] = synthetic.topic_vocab;
  j["synthetic.queries_per_topic"] = synthetic.queries_per_topic;
  j["synthetic.test_queries_per_topic"] = synthetic.test_queries_per_topic;
  j["synthetic.rel_per_query"] = synthetic.rel_per_query;
  j["synthetic.noise_tokens_per_doc"] = synthetic.noise_tokens_per_doc;
  j["synthetic.distractor_rate"] = synthetic.distractor_rate;
  return j;
}

void ExperimentConfig::set(const std::string& key, const std::string& v) {
  static const std::map<std::string, std::function<void(ExperimentConfig&, const std::string&, const std::string&)>>
      setters = {
          {"scenario", [](auto& c, auto&, auto& v) { c.scenario = parse_scenario(v); }},
          {"initial_checkpoint", [](auto& c, auto&, auto& v) { c.initial_checkpoint = v; }},
          {"iterations", [](auto& c, auto& k, auto& v) { c.iterations = as_int(k, v); }},
          {"schedule", [](auto& c, auto& k, auto& v) { c.schedule = as_int_list(k, v); }},
          {"seed", [](auto& c, auto& k, auto& v) { c.seed = as_u64(k, v); }},
          {"random_repeats", [](auto& c, auto& k, auto& v) { c.random_repeats = as_int(k, v); }},
          {"annotation_depth", [](auto& c, auto& k, auto& v) { c.annotation_depth = as_int(k, v); }},
          {"negative_depth", [](auto& c, auto& k, auto& v) { c.negative_depth = as_int(k, v); }},
          {"exclude_relevant_negatives",
           [](auto& c, auto& k, auto& v) { c.exclude_relevant_negatives = as_flag(k, v); }},
          {"return_exhausted_to_pool", [](auto& c, auto& k, auto& v) { c.return_exhausted_to_pool = as_flag(k, v); }},
          {"relevance_threshold", [](auto& c, auto& k, auto& v) { c.relevance_threshold = as_int(k, v); }},
          {"eval_k", [](auto& c, auto& k, auto& v) { c.eval_k = as_int(k, v); }},
          {"gain", [](auto& c, auto&, auto& v) { c.gain = parse_gain(v); }},
          {"variability_sizes", [](auto& c, auto& k, auto& v) { c.variability_sizes = as_int_list(k, v); }},
          {"strategies", [](auto& c, auto&, auto& v) { c.strategies = as_strategies(v); }},
          {"strategy", [](auto& c, auto&, auto& v) { c.strategies = as_strategies(v); }},
          {"validation_fraction", [](auto& c, auto& k, auto& v) { c.validation_fraction = as_real(k, v); }},
          {"corpus_path", [](auto& c, auto&, auto& v) { c.corpus_path = v; }},
          {"train_queries_path", [](auto& c, auto&, auto& v) { c.train_queries_path = v; }},
          {"test_queries_path", [](auto& c, auto&, auto& v) { c.test_queries_path = v; }},
          {"qrels_path", [](auto& c, auto&, auto& v) { c.qrels_path = v; }},
          {"selection.batch_size", [](auto& c, auto& k, auto& v) { c.selection.batch_size = as_int(k, v); }},
          {"selection.candidate_depth", [](auto& c, auto& k, auto& v) { c.selection.candidate_depth = as_int(k, v); }},
          {"selection.committee_size", [](auto& c, auto& k, auto& v) { c.selection.committee_size = as_int(k, v); }},
          {"selection.member_fraction",
           [](auto& c, auto& k, auto& v) { c.selection.member_fraction = as_real(k, v); }},
          {"selection.entropy_pair_depth",
           [](auto& c, auto& k, auto& v) { c.selection.entropy_pair_depth = as_int(k, v); }},
          {"selection.kmeans_max_iters",
           [](auto& c, auto& k, auto& v) { c.selection.kmeans_max_iters = as_int(k, v); }},
          {"selection.one_pair_per_query",
           [](auto& c, auto& k, auto& v) { c.selection.one_pair_per_query = as_flag(k, v); }},
          {"ranker.architecture", [](auto& c, auto&, auto& v) { c.ranker.architecture = parse_architecture(v); }},
          {"ranker.dim", [](auto& c, auto& k, auto& v) { c.ranker.dim = as_int(k, v); }},
          {"ranker.vocab_buckets", [](auto& c, auto& k, auto& v) { c.ranker.vocab_buckets = as_int(k, v); }},
          {"ranker.hash_seed", [](auto& c, auto& k, auto& v) { c.ranker.hash_seed = as_u64(k, v); }},
          {"ranker.learning_rate", [](auto& c, auto& k, auto& v) { c.ranker.learning_rate = as_real(k, v); }},
          {"ranker.epochs_selection", [](auto& c, auto& k, auto& v) { c.ranker.epochs_selection = as_int(k, v); }},
          {"ranker.epochs_evaluation", [](auto& c, auto& k, auto& v) { c.ranker.epochs_evaluation = as_int(k, v); }},
          {"ranker.batch_size", [](auto& c, auto& k, auto& v) { c.ranker.batch_size = as_int(k, v); }},
          {"ranker.sigma", [](auto& c, auto& k, auto& v) { c.ranker.sigma = as_real(k, v); }},
          {"ranker.init", [](auto& c, auto&, auto& v) { c.ranker.init = parse_init(v); }},
          {"ranker.early_stopping", [](auto& c, auto& k, auto& v) { c.ranker.early_stopping = as_flag(k, v); }},
          {"ranker.validate_every", [](auto& c, auto& k, auto& v) { c.ranker.validate_every = as_int(k, v); }},
          {"ranker.patience", [](auto& c, auto& k, auto& v) { c.ranker.patience = as_int(k, v); }},
          {"bm25.k1", [](auto& c, auto& k, auto& v) { c.bm25.k1 = as_real(k, v); }},
          {"bm25.b", [](auto& c, auto& k, auto& v) { c.bm25.b = as_real(k, v); }},
          {"synthetic.topics", [](auto& c, auto& k, auto& v) { c.synthetic.topics = as_int(k, v); }},
          {"synthetic.docs_per_topic", [](auto& c, auto& k, auto& v) { c.synthetic.docs_per_topic = as_int(k, v); }},
          {"synthetic.noise_vocab", [](auto& c, auto& k, auto& v) { c.synthetic.noise_vocab = as_int(k, v); }},
          {"synthetic.topic_vocab", [](auto& c, auto& k, auto& v) { c.synthetic.topic_vocab = as_int(k, v); }},
          {"synthetic.queries_per_topic",
           [](auto& c, auto& k, auto& v) { c.synthetic.queries_per_topic = as_int(k, v); }},
          {"synthetic.test_queries_per_topic",
           [](auto& c, auto& k, auto& v) { c.synthetic.test_queries_per_topic = as_int(k, v); }},
          {"synthetic.rel_per_query", [](auto& c, auto& k, auto& v) { c.synthetic.rel_per_query = as_int(k, v); }},
          {"synthetic.noise_tokens_per_doc",
           [](auto& c, auto& k, auto& v) { c.synthetic.noise_tokens_per_doc = as_int(k, v); }},
          {"synthetic.distractor_rate",
           [](auto& c, auto& k, auto& v) { c.synthetic.distractor_rate = as_real(k, v); }},
      };
  if (auto it = setters.find(key); it != setters.end()) {
    it->second(*this, key, v);
    return;
  }
  if (key.rfind("cost.", 0) == 0) {
    set_cost_option(cost, key.substr(5), v);
    return;
  }
  throw Error("config: unknown key '" + key + "'");
}

ExperimentConfig ExperimentConfig::from_json(const json& j, ExperimentConfig base) {
  if (!j.is_object()) throw Error("config: expected a JSON object");
  std::vector<std::pair<std::string, std::string>> entries;
  flatten(j, "", entries);
  for (const auto& [k, v] : entries) {
    if (k == "fingerprint" || k == "profile") continue;
    base.set(k, v);
  }
  return base;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) { return from_json(j, ExperimentConfig{}); }

std::uint64_t ExperimentConfig::fingerprint() const { return fnv1a(to_json().dump()); }

// ---- data -----------------------------------------------------------------------

DataBundle DataBundle::prepare(Corpus corpus, QuerySet train, QuerySet test, Qrels qrels,
                               const ExperimentConfig& config) {
  DataBundle d{std::move(corpus), std::move(train), std::move(test), std::move(qrels), {}, {}, {}};
  d.index = build_index(d.corpus, config.bm25);
  const auto train_depth = static_cast<std::size_t>(
      std::max({config.negative_depth, config.annotation_depth, config.selection.candidate_depth}));
  d.train_candidates = retrieve_all(d.index, d.train, train_depth);
  d.test_candidates = retrieve_all(d.index, d.test, static_cast<std::size_t>(config.selection.candidate_depth));
  return d;
}

DataBundle DataBundle::load(const ExperimentConfig& config) {
  if (config.corpus_path.empty()) {
    auto b = generate_synthetic(config.synthetic, config.seed);
    return prepare(std::move(b.corpus), std::move(b.train), std::move(b.test), std::move(b.qrels), config);
  }
  return prepare(parse_collection(config.corpus_path), parse_queries(config.train_queries_path),
                 parse_queries(config.test_queries_path), parse_qrels(config.qrels_path, config.relevance_threshold),
                 config);
}

// ---- iteration state ------------------------------------------------------------

namespace {

template <class Id>
std::vector<std::string> id_strings(const std::vector<Id>& ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(id.str());
  return out;
}

std::vector<QueryId> query_ids(const json& j) {
  std::vector<QueryId> out;
  for (const auto& e : j) out.emplace_back(e.get<std::string>());
  return out;
}

ojson metric_json(const MetricResult& m) {
  ojson j;
  j["k"] = m.k;
  j["mean"] = m.mean;
  ojson per = ojson::object();
  for (const auto& [q, v] : m.per_query) per[q.str()] = v;
  j["per_query"] = per;
  return j;
}

MetricResult metric_from(const json& j) {
  MetricResult m;
  m.k = j.at("k").get<std::size_t>();
  m.mean = j.at("mean").get<double>();
  for (auto it = j.at("per_query").begin(); it != j.at("per_query").end(); ++it)
    m.per_query.emplace(QueryId(it.key()), it->get<double>());
  return m;
}

ojson triplet_json(const TrainingTriplet& t) {
  return ojson::array({t.query.str(), t.positive.str(), t.negative.str()});
}

TrainingTriplet triplet_from(const json& j) {
  return {QueryId(j.at(0).get<std::string>()), DocumentId(j.at(1).get<std::string>()),
          DocumentId(j.at(2).get<std::string>())};
}

}  // namespace

ojson IterationState::to_json() const {
  ojson j;
  j["run"] = run_name;
  j["iteration"] = iteration;
  j["stop_reason"] = stop_reason;
  j["selected"] = id_strings(selected);
  ojson pairs = ojson::array();
  for (const auto& p : selected_pairs) pairs.push_back({{"query", p.query.str()}, {"doc", p.doc.str()}, {"score", p.score}});
  j["selected_pairs"] = pairs;
  ojson triplets = ojson::array();
  for (const auto& t : annotated) triplets.push_back(triplet_json(t));
  j["annotated"] = triplets;
  j["annotated_queries"] = id_strings(annotated_queries);
  j["pool"] = id_strings(pool);
  ojson rows = ojson::array();
  for (const auto& r : ledger.rows()) {
    ojson row;
    row["iteration"] = r.iteration;
    row["query"] = r.result.query.str();
    row["outcome"] = to_string(r.result.outcome);
    row["assessments"] = r.result.assessments;
    row["positive_rank"] = r.result.positive_rank ? json(*r.result.positive_rank) : json(nullptr);
    row["depth_examined"] = r.result.depth_examined;
    row["triplet"] = r.result.triplet ? triplet_json(*r.result.triplet) : ojson(nullptr);
    rows.push_back(row);
  }
  j["ledger"] = {{"iterations", ledger.iterations()}, {"rows", rows}};
  j["time"] = {{"training_hours", time.training_hours()}, {"selection_hours", time.selection_hours()}};
  ojson out;
  out["iteration"] = outcome.iteration;
  out["train_size"] = outcome.train_size;
  out["metric"] = metric_json(outcome.metric);
  out["cost"] = {{"iteration", outcome.cost.iteration},
                 {"assessments", outcome.cost.assessments},
                 {"annotation", outcome.cost.annotation},
                 {"compute", outcome.cost.compute},
                 {"total", outcome.cost.total}};
  j["outcome"] = out;
  return j;
}

IterationState IterationState::from_json(const json& j) {
  IterationState s;
  s.run_name = j.at("run").get<std::string>();
  s.iteration = j.at("iteration").get<int>();
  s.stop_reason = j.at("stop_reason").get<std::string>();
  s.selected = query_ids(j.at("selected"));
  for (const auto& p : j.at("selected_pairs"))
    s.selected_pairs.push_back(
        {QueryId(p.at("query").get<std::string>()), DocumentId(p.at("doc").get<std::string>()), p.at("score").get<double>()});
  for (const auto& t : j.at("annotated")) s.annotated.push_back(triplet_from(t));
  s.annotated_queries = query_ids(j.at("annotated_queries"));
  s.pool = query_ids(j.at("pool"));

  const auto& lj = j.at("ledger");
  std::vector<std::vector<AnnotationResult>> by_iteration(lj.at("iterations").get<std::size_t>());
  for (const auto& row : lj.at("rows")) {
    AnnotationResult r;
    r.query = QueryId(row.at("query").get<std::string>());
    r.outcome = parse_outcome(row.at("outcome").get<std::string>());
    r.assessments = row.at("assessments").get<std::size_t>();
    if (!row.at("positive_rank").is_null()) r.positive_rank = row.at("positive_rank").get<std::size_t>();
    r.depth_examined = row.at("depth_examined").get<std::size_t>();
    if (!row.at("triplet").is_null()) r.triplet = triplet_from(row.at("triplet"));
    const int it = row.at("iteration").get<int>();
    if (it < 1 || it > static_cast<int>(by_iteration.size())) throw Error("state: ledger row iteration out of range");
    by_iteration[static_cast<std::size_t>(it - 1)].push_back(std::move(r));
  }
  for (std::size_t i = 0; i < by_iteration.size(); ++i) s.ledger.record(static_cast<int>(i + 1), by_iteration[i]);

  const auto& tj = j.at("time");
  const auto train_h = tj.at("training_hours").get<std::vector<double>>();
  const auto sel_h = tj.at("selection_hours").get<std::vector<double>>();
  if (train_h.size() != sel_h.size()) throw Error("state: time ledger columns differ in length");
  for (std::size_t i = 0; i < train_h.size(); ++i) s.time.record(train_h[i], sel_h[i]);

  const auto& oj = j.at("outcome");
  s.outcome.iteration = oj.at("iteration").get<int>();
  s.outcome.train_size = oj.at("train_size").get<std::size_t>();
  s.outcome.metric = metric_from(oj.at("metric"));
  const auto& cj = oj.at("cost");
  s.outcome.cost = {cj.at("iteration").get<int>(), cj.at("assessments").get<std::uint64_t>(),
                    cj.at("annotation").get<double>(), cj.at("compute").get<double>(), cj.at("total").get<double>()};
  return s;
}

// ---- running ----------------------------------------------------------------------

std::string run_name(Strategy strategy, int repeat) { return to_string(strategy) + "-r" + std::to_string(repeat); }

std::uint64_t run_seed(std::uint64_t master, int repeat) {
  return repeat == 0 ? master : derive_seed(master, "repeat", static_cast<std::uint64_t>(repeat));
}

RankerState scenario_start(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.scenario == Scenario::retrain) return load_checkpoint(config.initial_checkpoint, &config.ranker);
  return initialize_ranker(config.ranker, derive_seed(seed, "ranker-init"));
}

namespace {

Run rerank_all(const RankerState& ranker, const QuerySet& queries, const Run& candidates,
               const std::vector<QueryId>& ids, const Corpus& corpus, std::size_t depth) {
  std::vector<RankedList> lists(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    lists[i] = rerank(ranker, queries.text(ids[i]), candidates.lists.at(ids[i]).truncated(depth), corpus);
  });
  Run run;
  run.tag = "rerank";
  for (auto& l : lists) run.add(std::move(l));
  return run;
}

std::vector<QueryId> ids_of(const QuerySet& queries) {
  std::vector<QueryId> ids;
  for (const auto& e : queries.entries()) ids.push_back(e.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// BM25 top-`depth` negatives; padded with unretrieved documents at score 0 when no candidate is eligible.
RankedList negative_pool(const DataBundle& data, const ExperimentConfig& config, const QueryId& q,
                         std::size_t depth) {
  const RankedList& bm25 = data.train_candidates.lists.at(q);
  RankedList pool = bm25.truncated(depth);
  std::size_t eligible = 0;
  for (const auto& item : pool.items())
    eligible += !config.exclude_relevant_negatives || !data.qrels.is_relevant(q, item.doc);
  if (eligible >= (config.exclude_relevant_negatives ? 1u : 2u) || pool.size() >= depth) return pool;
  std::set<DocumentId> retrieved;
  for (const auto& item : bm25.items()) retrieved.insert(item.doc);
  auto items = bm25.items();
  for (const auto& e : data.corpus.entries())
    if (!retrieved.count(e.id)) items.push_back({e.id, 0.0});
  return RankedList(q, std::move(items)).truncated(depth);
}

/// Training queries held out for early stopping; empty when it is off.
std::vector<QueryId> validation_queries(const ExperimentConfig& config, const DataBundle& data) {
  if (!config.ranker.early_stopping) return {};
  const auto ids = ids_of(data.train);
  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(ids.size()))));
  if (n >= ids.size()) throw Error("early stopping: validation split leaves no training queries");
  Rng rng(derive_seed(config.seed, "validation"));
  std::vector<QueryId> held;
  for (auto i : sample_without_replacement(rng, ids.size(), n)) held.push_back(ids[i]);
  std::sort(held.begin(), held.end());
  return held;
}

std::function<double(const RankerState&)> make_validator(const ExperimentConfig& config, const DataBundle& data,
                                                         const std::vector<QueryId>& held) {
  if (held.empty()) return {};
  return [&config, &data, held](const RankerState& r) {
    const Run run = rerank_all(r, data.train, data.train_candidates, held, data.corpus,
                               static_cast<std::size_t>(config.selection.candidate_depth));
    return ndcg_at_k(run, data.qrels, static_cast<std::size_t>(config.eval_k), config.gain).mean;
  };
}

double hours_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::ratio<3600>>(std::chrono::steady_clock::now() - t0).count();
}

struct Trained {
  RankerState state;
  double hours = 0;
};

Trained train_timed(const RankerState& start, const ExperimentConfig& config, const DataBundle& data,
                    const std::vector<TrainingTriplet>& triplets, int epochs, std::uint64_t seed,
                    const std::function<double(const RankerState&)>& validator) {
  if (triplets.empty()) return {start, 0.0};
  const auto t0 = std::chrono::steady_clock::now();
  TrainOptions o;
  o.epochs = epochs;
  o.seed = seed;
  o.validator = validator;
  auto result = train(start, config.ranker, triplets, data.train, data.corpus, o);
  const double hours = config.cost.measured_training_hours
                           ? hours_since(t0)
                           : config.cost.training_hours_per_triplet_epoch * static_cast<double>(triplets.size()) *
                                 static_cast<double>(result.epochs_run);
  return {std::move(result.state), hours};
}

std::string iteration_file(int i, const char* stem, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03d.%s", stem, i, ext);
  return buf;
}

void persist(const IterationState& s, const fs::path& dir) {
  write_file(dir / iteration_file(s.iteration, "iter", "json"), s.to_json().dump(1) + "\n");
  save_checkpoint(s.selector, dir / iteration_file(s.iteration, "selector", "ckpt"));
  write_file(dir / "assessments.csv", s.ledger.to_csv());
}

void check_config(const ExperimentConfig& config, const fs::path& dir) {
  const auto path = dir / "config.json";
  if (!fs::exists(path)) throw Error("no config.json in " + dir.string());
  const auto stored = json::parse(read_file(path));
  const auto fp = stored.at("fingerprint").get<std::uint64_t>();
  if (fp != config.fingerprint())
    throw Error("config fingerprint mismatch for " + dir.string() + ": stored " + std::to_string(fp) + ", current " +
                std::to_string(config.fingerprint()));
}

std::vector<IterationState> continue_run(const ExperimentConfig& config, const DataBundle& data,
                                         const RunOptions& options, std::vector<IterationState> states) {
  const auto schedule = config.resolved_schedule();
  const Strategy strategy = options.strategy;
  const std::uint64_t seed = run_seed(config.seed, options.repeat);
  const RankerState start = scenario_start(config, seed);
  const auto held = validation_queries(config, data);
  const auto validator = make_validator(config, data, held);
  const auto candidate_depth = static_cast<std::size_t>(config.selection.candidate_depth);
  const auto annotation_depth = static_cast<std::size_t>(config.annotation_depth);
  const auto negative_depth = static_cast<std::size_t>(config.negative_depth);
  AnnotatorOptions annotator;
  annotator.positive_depth = annotation_depth;
  annotator.exclude_relevant_negatives = config.exclude_relevant_negatives;

  std::optional<fs::path> dir;
  if (options.state_dir) dir = *options.state_dir / run_name(strategy, options.repeat);

  IterationState cur;
  if (states.empty()) {
    cur.run_name = run_name(strategy, options.repeat);
    for (const auto& q : ids_of(data.train))
      if (!std::binary_search(held.begin(), held.end(), q)) cur.pool.push_back(q);
    cur.selector = start;
  } else {
    cur = states.back();
  }

  for (int i = cur.iteration + 1; i <= config.iterations; ++i) {
    if (!cur.stop_reason.empty()) break;
    if (options.stop_after && i > *options.stop_after) break;

    IterationState next = cur;
    next.iteration = i;
    next.selected.clear();
    next.selected_pairs.clear();

    const auto s = static_cast<std::size_t>(schedule[static_cast<std::size_t>(i - 1)]);
    const Strategy active = i == 1 ? Strategy::random : strategy;
    const bool exhausting = cur.pool.size() <= s;
    double train_hours = 0;

    // Selection.
    const auto t_select = std::chrono::steady_clock::now();
    double committee_hours = 0, committee_wall = 0;
    std::vector<QueryId> chosen;
    if (exhausting) {
      chosen = cur.pool;
    } else if (active == Strategy::random) {
      Rng rng(derive_seed(seed, "subset", static_cast<std::uint64_t>(i)));
      chosen = select_random(cur.pool, s, rng);
    } else if (active == Strategy::uncertainty) {
      next.selected_pairs = select_uncertainty(cur.selector, cur.pool, data.train_candidates, data.train, data.corpus,
                                               candidate_depth, s, config.selection.one_pair_per_query)
                                .pairs;
    } else if (active == Strategy::qbc) {
      // Members restart from the scenario start on random subsets of D.
      const auto t_committee = std::chrono::steady_clock::now();
      const auto m = static_cast<std::size_t>(config.selection.committee_size);
      std::vector<Trained> members(m);
      parallel_for(m, [&](std::size_t k) {
        Rng rng(derive_seed(seed, "committee", static_cast<std::uint64_t>(i), k));
        const auto& d = cur.annotated;
        const auto n = d.empty() ? 0
                                 : std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                                                config.selection.member_fraction *
                                                                static_cast<double>(d.size()))));
        auto idx = sample_without_replacement(rng, d.size(), n);
        std::sort(idx.begin(), idx.end());
        std::vector<TrainingTriplet> subset;
        for (auto x : idx) subset.push_back(d[x]);
        members[k] = train_timed(start, config, data, subset, config.ranker.epochs_selection,
                                 derive_seed(seed, "committee-train", static_cast<std::uint64_t>(i), k), {});
      });
      committee_wall = hours_since(t_committee);
      std::vector<RankerState> committee;
      for (auto& t : members) {
        committee_hours += t.hours;
        committee.push_back(std::move(t.state));
      }
      for (const auto& q : select_qbc(committee, cur.pool, data.train_candidates, data.train, data.corpus,
                                      candidate_depth, static_cast<std::size_t>(config.selection.pair_depth()), s))
        chosen.push_back(q.query);
    } else {
      Rng rng(derive_seed(seed, "kmeans", static_cast<std::uint64_t>(i)));
      chosen = select_diversity(cur.selector, cur.pool, data.train, s, config.selection.kmeans_max_iters, rng);
    }
    train_hours += committee_hours;
    const double measured_selection = std::max(0.0, hours_since(t_select) - committee_wall);
    const double selection_hours =
        config.cost.measured_selection_hours ? measured_selection : config.cost.selection_hours_for(active);

    // Annotation, one unit per selected query or pair, in canonical order.
    struct Unit {
      QueryId query;
      std::optional<DocumentId> doc;
    };
    std::vector<Unit> units;
    if (!next.selected_pairs.empty()) {
      for (const auto& p : next.selected_pairs) units.push_back({p.query, p.doc});
      std::sort(units.begin(), units.end(), [](const Unit& a, const Unit& b) {
        return std::tie(a.query, *a.doc) < std::tie(b.query, *b.doc);
      });
    } else {
      std::sort(chosen.begin(), chosen.end());
      for (const auto& q : chosen) units.push_back({q, std::nullopt});
    }
    const bool use_bm25 = active == Strategy::random;
    std::vector<AnnotationResult> results(units.size());
    parallel_for(units.size(), [&](std::size_t u) {
      const auto& unit = units[u];
      const RankedList& bm25 = data.train_candidates.lists.at(unit.query);
      const RankedList top = bm25.truncated(annotation_depth);
      const RankedList ranking = use_bm25 ? top : rerank(cur.selector, data.train.text(unit.query), top, data.corpus);
      const RankedList negatives = negative_pool(data, config, unit.query, negative_depth);
      std::string key = unit.query.str();
      if (unit.doc) key += "\t" + unit.doc->str();
      Rng rng(derive_seed(seed, "negatives", static_cast<std::uint64_t>(i), fnv1a(key)));
      results[u] = unit.doc ? annotate_pair(unit.query, *unit.doc, data.qrels, ranking, negatives, rng, annotator)
                            : annotate_query(unit.query, ranking, negatives, data.qrels, rng, annotator);
    });
    next.ledger.record(i, results);

    std::set<QueryId> touched, kept;
    for (const auto& r : results) {
      touched.insert(r.query);
      if (r.triplet) {
        next.annotated.push_back(*r.triplet);
        kept.insert(r.query);
      }
    }
    next.selected.assign(touched.begin(), touched.end());
    std::set<QueryId> removed;
    for (const auto& q : touched)
      if (!config.return_exhausted_to_pool || kept.count(q)) removed.insert(q);
    std::vector<QueryId> pool;
    for (const auto& q : cur.pool)
      if (!removed.count(q)) pool.push_back(q);
    next.pool = std::move(pool);
    std::set<QueryId> done(cur.annotated_queries.begin(), cur.annotated_queries.end());
    done.insert(removed.begin(), removed.end());
    next.annotated_queries.assign(done.begin(), done.end());

    // Training from the scenario start on all of D.
    auto selector = train_timed(start, config, data, next.annotated, config.ranker.epochs_selection,
                                derive_seed(seed, "train-selection", static_cast<std::uint64_t>(i)), validator);
    auto evaluator = train_timed(start, config, data, next.annotated, config.ranker.epochs_evaluation,
                                 derive_seed(seed, "train-evaluation", static_cast<std::uint64_t>(i)), validator);
    train_hours += selector.hours + evaluator.hours;
    next.selector = std::move(selector.state);
    next.time.record(train_hours, selection_hours);

    next.outcome.iteration = i;
    next.outcome.train_size = next.annotated.size();
    next.outcome.metric = evaluate_ranker(evaluator.state, data, config);
    std::vector<std::uint64_t> cumulative;
    for (int k = 1; k <= i; ++k) cumulative.push_back(next.ledger.cumulative(k));
    next.outcome.cost = total_cost(cumulative, next.time, strategy, config.cost).rows.back();

    if (exhausting && i < config.iterations)
      next.stop_reason = "pool exhausted at iteration " + std::to_string(i) + ": " + std::to_string(cur.pool.size()) +
                         " queries left, " + std::to_string(s) + " requested";
    else if (next.pool.empty() && i < config.iterations)
      next.stop_reason = "pool exhausted at iteration " + std::to_string(i);

    if (dir) persist(next, *dir);
    states.push_back(next);
    cur = std::move(next);
  }
  return states;
}

}  // namespace

MetricResult evaluate_ranker(const RankerState& ranker, const DataBundle& data, const ExperimentConfig& config) {
  const Run run = rerank_all(ranker, data.test, data.test_candidates, ids_of(data.test), data.corpus,
                             static_cast<std::size_t>(config.selection.candidate_depth));
  return ndcg_at_k(run, data.qrels, static_cast<std::size_t>(config.eval_k), config.gain);
}

MetricResult evaluate_bm25(const DataBundle& data, const ExperimentConfig& config) {
  return ndcg_at_k(data.test_candidates, data.qrels, static_cast<std::size_t>(config.eval_k), config.gain);
}

std::vector<IterationState> run_experiment(const ExperimentConfig& config, const DataBundle& data,
                                           const RunOptions& options) {
  config.validate();
  if (options.state_dir) {
    write_or_check_config(config, *options.state_dir);
    const auto dir = *options.state_dir / run_name(options.strategy, options.repeat);
    if (fs::exists(dir)) fs::remove_all(dir);
  }
  return continue_run(config, data, options, {});
}

std::vector<IterationState> load_states(const fs::path& run_dir) {
  std::vector<IterationState> states;
  for (int i = 1;; ++i) {
    const auto path = run_dir / iteration_file(i, "iter", "json");
    if (!fs::exists(path)) break;
    auto s = IterationState::from_json(json::parse(read_file(path)));
    if (s.iteration != i) throw Error("state: " + path.string() + " holds iteration " + std::to_string(s.iteration));
    s.selector = load_checkpoint(run_dir / iteration_file(i, "selector", "ckpt"));
    states.push_back(std::move(s));
  }
  return states;
}

std::vector<IterationState> resume(const ExperimentConfig& config, const DataBundle& data, const RunOptions& options) {
  if (!options.state_dir) throw Error("resume: no state directory given");
  config.validate();
  check_config(config, *options.state_dir);
  auto states = load_states(*options.state_dir / run_name(options.strategy, options.repeat));
  return continue_run(config, data, options, std::move(states));
}

StrategyCurve to_curve(const std::vector<IterationState>& states, Strategy strategy, int repeat, std::uint64_t seed) {
  StrategyCurve c;
  c.strategy = to_string(strategy);
  c.repeat = repeat;
  c.seed = seed;
  for (const auto& s : states) c.iterations.push_back(s.outcome);
  return c;
}

// ---- variability ------------------------------------------------------------------

std::vector<VariabilityRecord> run_variability(const ExperimentConfig& config, const DataBundle& data,
                                               const std::vector<int>& sizes, int repeats) {
  config.validate();
  if (repeats < 2) throw Error("variability: repeats must be >= 2");
  if (sizes.empty()) throw Error("variability: no sizes given");
  const auto depth = static_cast<std::size_t>(config.annotation_depth);

  // Queries whose BM25 walk reaches a relevant document produce a triplet.
  std::vector<QueryId> producible;
  for (const auto& q : ids_of(data.train))
    if (first_relevant(data.train_candidates.lists.at(q), data.qrels, depth).found()) producible.push_back(q);
  for (int size : sizes)
    if (size < 1 || static_cast<std::size_t>(size) > producible.size())
      throw Error("variability: size " + std::to_string(size) + " exceeds the " + std::to_string(producible.size()) +
                  " queries that yield a triplet");

  AnnotatorOptions annotator;
  annotator.positive_depth = depth;
  annotator.exclude_relevant_negatives = config.exclude_relevant_negatives;
  const auto negative_depth = static_cast<std::size_t>(config.negative_depth);

  const std::size_t n = sizes.size() * static_cast<std::size_t>(repeats);
  std::vector<VariabilityRecord> records(n);
  for (std::size_t job = 0; job < n; ++job) {
    const int size = sizes[job / static_cast<std::size_t>(repeats)];
    const int r = static_cast<int>(job % static_cast<std::size_t>(repeats));
    const std::uint64_t seed = run_seed(config.seed, r);
    Rng rng(derive_seed(seed, "variability-subset", static_cast<std::uint64_t>(size)));
    auto idx = sample_without_replacement(rng, producible.size(), static_cast<std::size_t>(size));
    std::sort(idx.begin(), idx.end());
    std::vector<TrainingTriplet> triplets(idx.size());
    parallel_for(idx.size(), [&](std::size_t k) {
      const auto& q = producible[idx[k]];
      const auto& bm25 = data.train_candidates.lists.at(q);
      Rng neg(derive_seed(seed, "variability-negatives", static_cast<std::uint64_t>(size), fnv1a(q.str())));
      auto res = annotate_query(q, bm25.truncated(depth), negative_pool(data, config, q, negative_depth), data.qrels,
                                neg, annotator);
      triplets[k] = *res.triplet;
    });
    const auto start = scenario_start(config, seed);
    const auto trained = train_timed(start, config, data, triplets, config.ranker.epochs_evaluation,
                                     derive_seed(seed, "variability-train", static_cast<std::uint64_t>(size)), {});
    records[job] = {static_cast<std::size_t>(size), r, seed, evaluate_ranker(trained.state, data, config).mean};
  }
  return records;
}

void write_variability(const std::vector<VariabilityRecord>& records, const fs::path& out_dir) {
  ojson j = ojson::array();
  for (const auto& r : records)
    j.push_back({{"size", r.size}, {"repeat", r.repeat}, {"seed", r.seed}, {"ndcg", r.ndcg}});
  write_file(out_dir / "variability.json", j.dump(1) + "\n");
}

// ---- suites -------------------------------------------------------------------------

void write_or_check_config(const ExperimentConfig& config, const fs::path& out_dir) {
  if (fs::exists(out_dir / "config.json")) {
    check_config(config, out_dir);
    return;
  }
  ojson j = config.to_json();
  j["fingerprint"] = config.fingerprint();
  write_file(out_dir / "config.json", j.dump(2) + "\n");
}

ExperimentConfig read_config(const fs::path& out_dir) {
  const auto path = out_dir / "config.json";
  if (!fs::exists(path)) throw Error("no config.json in " + out_dir.string());
  auto config = ExperimentConfig::from_json(json::parse(read_file(path)));
  check_config(config, out_dir);
  return config;
}

namespace {

struct PlannedRun {
  Strategy strategy;
  int repeat;
};

std::vector<PlannedRun> planned_runs(const ExperimentConfig& config) {
  std::vector<PlannedRun> runs;
  for (int r = 0; r < config.random_repeats; ++r) runs.push_back({Strategy::random, r});
  for (auto s : config.strategies)
    if (s != Strategy::random) runs.push_back({s, 0});
  return runs;
}

void write_baselines(const ExperimentConfig& config, const DataBundle& data, const fs::path& out_dir) {
  ojson j;
  j["bm25"] = metric_json(evaluate_bm25(data, config));
  j["untrained"] = metric_json(evaluate_ranker(scenario_start(config, run_seed(config.seed, 0)), data, config));
  write_file(out_dir / "baselines.json", j.dump(1) + "\n");
}

ReportInputs finish_suite(const fs::path& out_dir) {
  auto inputs = load_report_inputs(out_dir);
  emit_reports(inputs, out_dir / "reports");
  return inputs;
}

}  // namespace

ReportInputs run_suite(const ExperimentConfig& config, const DataBundle& data, const fs::path& out_dir,
                       std::optional<int> stop_after) {
  config.validate();
  write_or_check_config(config, out_dir);
  write_baselines(config, data, out_dir);
  for (const auto& p : planned_runs(config)) {
    RunOptions o;
    o.strategy = p.strategy;
    o.repeat = p.repeat;
    o.state_dir = out_dir / "runs";
    o.stop_after = stop_after;
    run_experiment(config, data, o);
  }
  return finish_suite(out_dir);
}

ReportInputs resume_suite(const ExperimentConfig& config, const DataBundle& data, const fs::path& out_dir) {
  config.validate();
  check_config(config, out_dir);
  if (!fs::exists(out_dir / "baselines.json")) write_baselines(config, data, out_dir);
  for (const auto& p : planned_runs(config)) {
    RunOptions o;
    o.strategy = p.strategy;
    o.repeat = p.repeat;
    o.state_dir = out_dir / "runs";
    auto states = load_states(out_dir / "runs" / run_name(p.strategy, p.repeat));
    continue_run(config, data, o, std::move(states));
  }
  return finish_suite(out_dir);
}

ReportInputs load_report_inputs(const fs::path& out_dir) {
  const auto config = read_config(out_dir);
  ReportInputs in;
  for (const auto& p : planned_runs(config)) {
    const auto dir = out_dir / "runs" / run_name(p.strategy, p.repeat);
    if (!fs::exists(dir)) continue;
    auto states = load_states(dir);
    if (!states.empty()) in.curves.push_back(to_curve(states, p.strategy, p.repeat, run_seed(config.seed, p.repeat)));
  }
  if (fs::exists(out_dir / "baselines.json")) {
    const auto b = json::parse(read_file(out_dir / "baselines.json"));
    in.bm25 = metric_from(b.at("bm25"));
    in.untrained = metric_from(b.at("untrained"));
  }
  if (fs::exists(out_dir / "variability.json")) {
    for (const auto& r : json::parse(read_file(out_dir / "variability.json")))
      in.variability.push_back({r.at("size").get<std::size_t>(), r.at("repeat").get<int>(),
                                r.at("seed").get<std::uint64_t>(), r.at("ndcg").get<double>()});
  }
  std::size_t active = 0;
  for (auto s : config.strategies)
    if (s != Strategy::random) ++active;
  in.comparisons = std::max<std::size_t>(1, active);
  return in;
}

}  // namespace alrank
