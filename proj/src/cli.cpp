#include "alrank/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "alrank/experiment.hpp"

namespace alrank {

namespace {

namespace fs = std::filesystem;

/// Flags shared by the commands that build an ExperimentConfig.
struct ConfigFlags {
  std::string config_path;
  std::string profile = "desk";
  std::vector<std::string> overrides;
  std::string corpus, train_queries, test_queries, qrels;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app, bool data_flags = true) {
    app->add_option("--config", config_path, "Flat JSON config file")->default_str("none");
    app->add_option("--profile", profile, "Preset applied before the config file (desk or paper)")
        ->capture_default_str();
    app->add_option("--set", overrides, "Override as key=value; repeatable, applied last")->default_str("none");
    app->add_option("--seed", seed, "Master seed")->default_str("42");
    if (data_flags) {
      app->add_option("--corpus", corpus, "Collection TSV (docid<TAB>text); omit all four for synthetic data")
          ->default_str("synthetic");
      app->add_option("--train-queries", train_queries, "Training queries TSV")->default_str("synthetic");
      app->add_option("--test-queries", test_queries, "Test queries TSV")->default_str("synthetic");
      app->add_option("--qrels", qrels, "TREC qrels")->default_str("synthetic");
    }
  }

  ExperimentConfig build() const {
    ExperimentConfig c = ExperimentConfig::profile(profile);
    if (!config_path.empty()) c = ExperimentConfig::from_json(nlohmann::json::parse(read_file(config_path)), c);
    const int given = !corpus.empty() + !train_queries.empty() + !test_queries.empty() + !qrels.empty();
    if (given != 0) {
      for (auto [flag, value] : {std::pair{"--corpus", &corpus}, {"--train-queries", &train_queries},
                                 {"--test-queries", &test_queries}, {"--qrels", &qrels}})
        if (value->empty()) throw Error(std::string("missing required field ") + flag);
      c.corpus_path = corpus;
      c.train_queries_path = train_queries;
      c.test_queries_path = test_queries;
      c.qrels_path = qrels;
    }
    if (seed) c.seed = *seed;
    for (const auto& kv : overrides) {
      auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw Error("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (auto [name, path] : {std::pair{"corpus_path", &c.corpus_path}, {"train_queries_path", &c.train_queries_path},
                              {"test_queries_path", &c.test_queries_path}, {"qrels_path", &c.qrels_path}})
      if (!path->empty() && !fs::exists(*path)) throw Error(std::string(name) + ": no such file '" + *path + "'");
    c.validate();
    return c;
  }
};

void require_file(const std::string& field, const std::string& path) {
  if (path.empty()) throw Error("missing required field " + field);
  if (!fs::exists(path)) throw Error(field + ": no such file '" + path + "'");
}

std::string money(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Budget-aware active learning for rankers", "alrank"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  std::optional<std::size_t> threads;
  app.add_option("--threads", threads, "Worker threads; falls back to ALRANK_THREADS")->default_str("1")->check(CLI::PositiveNumber);

  // build-index
  auto* build = app.add_subcommand("build-index", "Build a BM25 inverted index from a collection");
  std::string bi_corpus, bi_out, bi_stopwords;
  Bm25Params bi_params;
  build->add_option("--corpus", bi_corpus, "Collection TSV")->required();
  build->add_option("--out", bi_out, "Index file to write")->required();
  build->add_option("--k1", bi_params.k1, "BM25 k1")->capture_default_str();
  build->add_option("--b", bi_params.b, "BM25 b")->capture_default_str();
  build->add_option("--stopwords", bi_stopwords, "File with one stopword per line")->default_str("none");

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "BM25 top-k for every query, as a TREC run");
  std::string rt_index, rt_queries, rt_out, rt_tag = "bm25";
  std::size_t rt_k = 1000;
  retrieve->add_option("--index", rt_index, "Index file")->required();
  retrieve->add_option("--queries", rt_queries, "Queries TSV")->required();
  retrieve->add_option("--out", rt_out, "Run file to write")->required();
  retrieve->add_option("--k", rt_k, "Depth")->capture_default_str()->check(CLI::PositiveNumber);
  retrieve->add_option("--tag", rt_tag, "Run tag")->capture_default_str();

  // make-synthetic
  auto* synth = app.add_subcommand("make-synthetic", "Write a planted-topic collection");
  std::string sy_out;
  ConfigFlags sy_flags;
  synth->add_option("--out", sy_out, "Output directory")->required();
  sy_flags.attach(synth, false);

  // run-variability
  auto* variability = app.add_subcommand("run-variability", "Train on random subsets of several sizes");
  std::string va_out;
  std::vector<int> va_sizes;
  int va_repeats = 4;
  ConfigFlags va_flags;
  variability->add_option("--out", va_out, "Output directory")->required();
  variability->add_option("--sizes", va_sizes, "Training set sizes")->default_str("25 50 100 200");
  variability->add_option("--repeats", va_repeats, "Seeds per size")->capture_default_str();
  va_flags.attach(variability);

  // run-al
  auto* run_al = app.add_subcommand("run-al", "Run the active learning loop");
  std::string al_out, al_strategy;
  std::optional<int> al_iterations, al_batch, al_stop_after;
  ConfigFlags al_flags;
  run_al->add_option("--out", al_out, "Output directory")->required();
  run_al->add_option("--strategy", al_strategy, "random, uncertainty, qbc, diversity, all, or a comma list")->default_str("all");
  run_al->add_option("--iterations", al_iterations, "Iterations I")->default_str("5");
  run_al->add_option("--batch-size", al_batch, "Queries added per iteration s")->default_str("20");
  run_al->add_option("--stop-after", al_stop_after, "Stop every run after this many iterations (resumable)")->default_str("none");
  al_flags.attach(run_al);

  // resume
  auto* resume_cmd = app.add_subcommand("resume", "Continue an interrupted run-al directory");
  std::string rs_in;
  resume_cmd->add_option("--in", rs_in, "Run directory")->required();

  // cost-calc
  auto* cost = app.add_subcommand("cost-calc", "Annotation and compute cost of one iteration");
  std::uint64_t cc_assessments = 0;
  double cc_gpu_hours = 0, cc_cpu_hours = 0;
  int cc_iteration = 1;
  std::string cc_config = "default";
  std::string cc_ledger, cc_strategy = "random", cc_out;
  std::vector<double> cc_training_hours;
  auto* cc_a = cost->add_option("--assessments", cc_assessments, "Cumulative assessments A(i)");
  auto* cc_l = cost->add_option("--ledger", cc_ledger, "Assessment ledger CSV; prints the per-iteration report")
                   ->default_str("none");
  cc_a->excludes(cc_l);
  cost->add_option("--training-hours", cc_training_hours, "Per-iteration training hours for --ledger")
      ->default_str("0 ...")
      ->delimiter(',');
  cost->add_option("--strategy", cc_strategy, "Strategy whose H_CPU applies with --ledger")->capture_default_str();
  cost->add_option("--out", cc_out, "Also write the report CSV here")->default_str("none");
  cost->add_option("--gpu-hours", cc_gpu_hours, "Cumulative training hours H_GPU(i)")->capture_default_str();
  cost->add_option("--cpu-hours", cc_cpu_hours, "Selection hours per iteration H_CPU")->capture_default_str();
  cost->add_option("--iteration", cc_iteration, "Iteration i")->capture_default_str()->check(CLI::PositiveNumber);
  cost->add_option("--config", cc_config, "Cost config file, or 'default'")->capture_default_str();

  // report
  auto* report = app.add_subcommand("report", "Re-emit reports and print the summary table");
  std::string rp_in;
  report->add_option("--in", rp_in, "Run directory")->required();

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (threads) set_thread_count(*threads);

    if (*build) {
      require_file("--corpus", bi_corpus);
      std::vector<std::string> stopwords;
      if (!bi_stopwords.empty()) {
        require_file("--stopwords", bi_stopwords);
        std::istringstream in(read_file(bi_stopwords));
        for (std::string w; std::getline(in, w);)
          if (!w.empty()) stopwords.push_back(w);
      }
      const auto index = build_index(parse_collection(bi_corpus), bi_params, stopwords);
      save_index(index, bi_out);
      out << "indexed " << index.doc_count() << " documents, " << index.terms().size() << " terms -> " << bi_out
          << "\n";
    } else if (*retrieve) {
      require_file("--index", rt_index);
      require_file("--queries", rt_queries);
      const auto index = load_index(rt_index);
      const auto run = retrieve_all(index, parse_queries(rt_queries), rt_k, rt_tag);
      write_run(run, rt_out);
      out << "retrieved " << run.lists.size() << " queries -> " << rt_out << "\n";
    } else if (*synth) {
      const auto config = sy_flags.build();
      const auto b = generate_synthetic(config.synthetic, config.seed);
      const fs::path dir = sy_out;
      write_file(dir / "collection.tsv", serialize_collection(b.corpus));
      write_file(dir / "train_queries.tsv", serialize_queries(b.train));
      write_file(dir / "test_queries.tsv", serialize_queries(b.test));
      write_file(dir / "qrels.txt", serialize_qrels(b.qrels));
      out << b.corpus.size() << " documents, " << b.train.size() << " train / " << b.test.size()
          << " test queries -> " << sy_out << "\n";
    } else if (*variability) {
      auto config = va_flags.build();
      if (!va_sizes.empty()) config.variability_sizes = va_sizes;
      const auto data = DataBundle::load(config);
      write_or_check_config(config, va_out);
      const auto records = run_variability(config, data, config.variability_sizes, va_repeats);
      write_variability(records, va_out);
      emit_reports(load_report_inputs(va_out), fs::path(va_out) / "reports");
      for (const auto& r : records)
        out << "size " << r.size << " repeat " << r.repeat << " ndcg@" << config.eval_k << " " << format_double(r.ndcg)
            << "\n";
    } else if (*run_al) {
      if (!al_strategy.empty()) al_flags.overrides.insert(al_flags.overrides.begin(), "strategies=" + al_strategy);
      if (al_iterations) al_flags.overrides.insert(al_flags.overrides.begin(), "iterations=" + std::to_string(*al_iterations));
      if (al_batch)
        al_flags.overrides.insert(al_flags.overrides.begin(), "selection.batch_size=" + std::to_string(*al_batch));
      const auto config = al_flags.build();
      const auto data = DataBundle::load(config);
      run_suite(config, data, al_out, al_stop_after);
      out << read_file(fs::path(al_out) / "reports" / "summary.md");
    } else if (*resume_cmd) {
      const auto config = read_config(rs_in);
      const auto data = DataBundle::load(config);
      resume_suite(config, data, rs_in);
      out << read_file(fs::path(rs_in) / "reports" / "summary.md");
    } else if (*cost) {
      CostConfig cfg;
      if (cc_config != "default") {
        require_file("--config", cc_config);
        cfg = parse_cost_config(read_file(cc_config), cc_config);
      }
      if (!cc_ledger.empty()) {
        require_file("--ledger", cc_ledger);
        const auto ledger = AssessmentLedger::from_csv(read_file(cc_ledger), cc_ledger);
        const auto n = static_cast<std::size_t>(ledger.iterations());
        if (!cc_training_hours.empty() && cc_training_hours.size() != n)
          throw Error("--training-hours has " + std::to_string(cc_training_hours.size()) + " values, ledger has " +
                      std::to_string(n) + " iterations");
        TimeLedger time;
        std::vector<std::uint64_t> cumulative;
        for (std::size_t i = 0; i < n; ++i) {
          time.record(cc_training_hours.empty() ? 0.0 : cc_training_hours[i], 0.0);
          cumulative.push_back(ledger.cumulative(static_cast<int>(i + 1)));
        }
        const auto csv = total_cost(cumulative, time, parse_strategy(cc_strategy), cfg).to_csv();
        if (!cc_out.empty()) write_file(cc_out, csv);
        out << csv;
        return 0;
      }
      if (cc_a->count() == 0) throw Error("missing required field --assessments (or --ledger)");
      const double ca = annotation_cost(cc_assessments, cfg);
      const double cc = compute_cost(cc_gpu_hours, cc_iteration, cc_cpu_hours, cfg);
      out << "C_A=" << money(ca) << "\nC_C=" << money(cc) << "\nC=" << money(ca + cc) << "\n";
    } else if (*report) {
      if (!fs::exists(fs::path(rp_in) / "config.json")) throw Error("--in: no config.json in '" + rp_in + "'");
      emit_reports(load_report_inputs(rp_in), fs::path(rp_in) / "reports");
      out << read_file(fs::path(rp_in) / "reports" / "summary.md");
    }
  } catch (const std::exception& e) {
    err << "alrank: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace alrank
