#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "alrank/lexical.hpp"
#include "alrank/ranker.hpp"
#include "alrank/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace alrank;
using alrank::testing::TempDir;

namespace {

RankerConfig small_config(Architecture a) {
  RankerConfig c;
  c.architecture = a;
  c.dim = 6;
  c.vocab_buckets = 17;
  c.learning_rate = 0.01;
  c.batch_size = 4;
  return c;
}

const Architecture kAll[] = {Architecture::cross, Architecture::bi, Architecture::maxsim};

/// Queries and a corpus small enough for dense finite differences.
struct Toy {
  Corpus corpus;
  QuerySet queries;
  std::vector<TrainingTriplet> triplets;
};

Toy toy(Rng& rng, std::size_t n_triplets) {
  Toy t;
  t.corpus = alrank::testing::random_corpus(rng, 12, 15, 6);
  // Guarantee non-empty documents so every triplet contributes.
  Corpus filled;
  for (const auto& e : t.corpus.entries()) filled.add(e.id, e.text.empty() ? "w0 w1" : e.text);
  t.corpus = filled;
  for (int q = 0; q < 4; ++q) t.queries.add(QueryId("q" + std::to_string(q)), alrank::testing::random_text(rng, 15, 1, 3));
  for (std::size_t i = 0; i < n_triplets; ++i) {
    const auto pos = uniform_index(rng, t.corpus.size());
    auto neg = uniform_index(rng, t.corpus.size() - 1);
    if (neg >= pos) ++neg;
    t.triplets.push_back({t.queries[uniform_index(rng, t.queries.size())].id, t.corpus[pos].id, t.corpus[neg].id});
  }
  return t;
}

}  // namespace

TEST_CASE("architecture names") {
  for (auto a : kAll) CHECK(parse_architecture(to_string(a)) == a);
  CHECK_THROWS_AS(parse_architecture("colbert"), Error);
}

TEST_CASE("config validation") {
  RankerConfig c;
  CHECK_NOTHROW(c.validate());
  c.dim = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = RankerConfig{};
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = RankerConfig{};
  c.epochs_selection = 300;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("initialization shapes and range") {
  for (auto a : kAll) {
    auto c = small_config(a);
    auto s = initialize_ranker(c, 1);
    std::size_t n = 1;
    for (auto d : s.shape()) n *= d;
    CHECK(s.weights.size() == n);
    const double r = 1 / std::sqrt(6.0);
    for (double w : s.weights) CHECK(std::abs(w) <= r);
    CHECK(initialize_ranker(c, 1) == s);
    CHECK(initialize_ranker(c, 2) != s);
    c.init = WeightInit::zero;
    for (double w : initialize_ranker(c, 1).weights) CHECK(w == 0.0);
  }
}

TEST_CASE("cross score equals the dot product with independently extracted features") {
  Rng rng(11);
  RankerConfig c;
  c.dim = 64;
  const auto s = initialize_ranker(c, 4);
  for (int i = 0; i < 100; ++i) {
    const auto q = alrank::testing::random_text(rng, 30, 0, 5);
    const auto d = alrank::testing::random_text(rng, 30, 0, 12);
    const auto phi = alrank::testing::cross_feature_oracle(s, q, d);
    double expected = 0;
    for (std::size_t k = 0; k < phi.size(); ++k) expected += s.weights[k] * phi[k];
    CHECK(score(s, q, d) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("zero-weight bi scores zero everywhere") {
  auto c = small_config(Architecture::bi);
  c.init = WeightInit::zero;
  const auto s = initialize_ranker(c, 0);
  CHECK(score(s, "a b", "c d a") == 0.0);
  CHECK(score(s, "x", "x") == 0.0);
}

TEST_CASE("maxsim with a single query token takes the best document token") {
  const auto s = initialize_ranker(small_config(Architecture::maxsim), 3);
  auto row = [&](const std::string& tok) {
    const auto e = encode_text(s, tok);
    const std::size_t r = splitmix64(e.tokens[0]) % static_cast<std::uint64_t>(s.vocab_buckets);
    return std::vector<double>(s.weights.begin() + r * s.dim, s.weights.begin() + (r + 1) * s.dim);
  };
  auto dotv = [](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
  };
  const double expected = std::max(dotv(row("q"), row("a")), dotv(row("q"), row("b")));
  CHECK(score(s, "q", "a b") == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("empty texts score zero") {
  for (auto a : kAll) {
    const auto s = initialize_ranker(small_config(a), 5);
    CHECK(score(s, "", "a b") == 0.0);
    CHECK(score(s, "a", "") == 0.0);
    CHECK(score(s, "!!", "a") == 0.0);
  }
}

TEST_CASE("encode_query") {
  for (auto a : kAll) {
    const auto s = initialize_ranker(small_config(a), 6);
    CHECK(encode_query(s, "a b c").size() == 6u);
    const auto empty = encode_query(s, "");
    CHECK(empty == std::vector<double>(6, 0.0));
  }
  const auto bi = initialize_ranker(small_config(Architecture::bi), 6);
  const auto aa = encode_query(bi, "a a");
  const auto a1 = encode_query(bi, "a");
  for (std::size_t i = 0; i < aa.size(); ++i) CHECK(aa[i] == doctest::Approx(a1[i]).epsilon(1e-15));
}

TEST_CASE("ranknet loss") {
  CHECK(ranknet_loss(0.3, 0.3, 1).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(ranknet_loss(1e6, -1e6, 1).loss == 0.0);
  CHECK(std::isfinite(ranknet_loss(-1e6, 1e6, 1).loss));
  CHECK(ranknet_loss(-1e6, 1e6, 1).loss == doctest::Approx(2e6));

  Rng rng(8);
  const double h = 1e-4;
  for (int i = 0; i < 100; ++i) {
    const double sp = uniform_real(rng, -5, 5), sn = uniform_real(rng, -5, 5), sigma = uniform_real(rng, 0.2, 3);
    const auto l = ranknet_loss(sp, sn, sigma);
    const double fd_pos = (ranknet_loss(sp + h, sn, sigma).loss - ranknet_loss(sp - h, sn, sigma).loss) / (2 * h);
    const double fd_neg = (ranknet_loss(sp, sn + h, sigma).loss - ranknet_loss(sp, sn - h, sigma).loss) / (2 * h);
    CHECK(std::abs(l.grad_pos - fd_pos) <= 1e-5 * std::max(std::abs(fd_pos), 1e-3));
    CHECK(std::abs(l.grad_neg - fd_neg) <= 1e-5 * std::max(std::abs(fd_neg), 1e-3));
    CHECK(l.grad_pos == doctest::Approx(-sigma / (1 + std::exp(sigma * (sp - sn)))).epsilon(1e-12));
  }
}

TEST_CASE("batch gradient matches central finite differences") {
  Rng rng(13);
  for (auto a : kAll) {
    CAPTURE(to_string(a));
    for (int trial = 0; trial < 5; ++trial) {
      const auto t = toy(rng, 6);
      auto s = initialize_ranker(small_config(a), 100 + trial);
      const auto enc = encode_triplets(s, t.triplets, t.queries, t.corpus);
      std::vector<double> grad;
      batch_loss_and_gradient(s, enc, 1.0, &grad);
      std::vector<double> fd(s.weights.size());
      const double h = 1e-4;
      for (std::size_t k = 0; k < s.weights.size(); ++k) {
        const double w = s.weights[k];
        s.weights[k] = w + h;
        const double up = batch_loss_and_gradient(s, enc, 1.0, nullptr);
        s.weights[k] = w - h;
        const double down = batch_loss_and_gradient(s, enc, 1.0, nullptr);
        s.weights[k] = w;
        fd[k] = (up - down) / (2 * h);
      }
      CHECK(alrank::testing::relative_error(grad, fd) <= 1e-4);
    }
  }
}

TEST_CASE("training is deterministic and leaves its input alone") {
  Rng rng(17);
  const auto t = toy(rng, 20);
  for (auto a : kAll) {
    const auto c = small_config(a);
    const auto s0 = initialize_ranker(c, 1);
    const auto copy = s0;
    TrainOptions opt;
    opt.epochs = 3;
    opt.seed = 99;
    const auto r1 = train(s0, c, t.triplets, t.queries, t.corpus, opt);
    const auto r2 = train(s0, c, t.triplets, t.queries, t.corpus, opt);
    CHECK(s0 == copy);
    CHECK(r1.state == r2.state);
    CHECK(r1.state.weights != s0.weights);
    CHECK(r1.epochs_run == 3);
    CHECK(r1.state.steps == 15u);
  }
}

TEST_CASE("a zero learning rate leaves the weights unchanged") {
  Rng rng(19);
  const auto t = toy(rng, 10);
  for (auto a : kAll) {
    auto c = small_config(a);
    const auto s0 = initialize_ranker(c, 2);
    c.learning_rate = 0;
    TrainOptions opt;
    opt.epochs = 1;
    CHECK(train(s0, c, t.triplets, t.queries, t.corpus, opt).state.weights == s0.weights);
  }
}

TEST_CASE("training rejects bad input") {
  Rng rng(23);
  const auto t = toy(rng, 3);
  const auto c = small_config(Architecture::cross);
  const auto s = initialize_ranker(c, 1);
  TrainOptions opt;
  CHECK_THROWS_AS(train(s, c, {}, t.queries, t.corpus, opt), Error);
  opt.epochs = 0;
  CHECK_THROWS_AS(train(s, c, t.triplets, t.queries, t.corpus, opt), Error);
  opt.epochs = 1;
  std::vector<TrainingTriplet> bad{{t.queries[0].id, DocumentId("nope"), t.corpus[0].id}};
  CHECK_THROWS_AS(train(s, c, bad, t.queries, t.corpus, opt), Error);
  CHECK_THROWS_AS(train(s, small_config(Architecture::bi), t.triplets, t.queries, t.corpus, opt), Error);
}

TEST_CASE("training on planted synthetic data lowers the loss") {
  const auto data = generate_synthetic(SyntheticSpec{}, 42);
  const auto index = build_index(data.corpus);
  std::vector<TrainingTriplet> triplets;
  for (const auto& q : data.train.entries()) {
    if (triplets.size() == 200) break;
    const auto top = retrieve_topk(index, q.id, q.text, 30);
    const auto& rel = data.qrels.judgments(q.id);
    for (const auto& item : top.items()) {
      if (data.qrels.is_relevant(q.id, item.doc)) continue;
      triplets.push_back({q.id, rel.begin()->first, item.doc});
      break;
    }
  }
  REQUIRE(triplets.size() == 200);
  for (auto a : kAll) {
    RankerConfig c;
    c.architecture = a;
    // Mean-pooled bi embeddings move slowly, so the step is large enough for five epochs to show.
    c.learning_rate = 0.5;
    c.batch_size = 16;
    TrainOptions opt;
    opt.epochs = 5;
    opt.seed = 1;
    const auto r = train(initialize_ranker(c, 7), c, triplets, data.train, data.corpus, opt);
    CAPTURE(to_string(a));
    CHECK(r.epoch_losses.back() < r.epoch_losses.front());
  }
}

TEST_CASE("early stopping keeps the best validated state") {
  Rng rng(29);
  const auto t = toy(rng, 12);
  auto c = small_config(Architecture::cross);
  c.early_stopping = true;
  c.validate_every = 1;
  c.patience = 2;
  TrainOptions opt;
  opt.epochs = 20;
  int calls = 0;
  // Improves for three checks, then never again.
  opt.validator = [&](const RankerState&) { return ++calls <= 3 ? calls : 0.0; };
  const auto r = train(initialize_ranker(c, 1), c, t.triplets, t.queries, t.corpus, opt);
  CHECK(r.epochs_run == 5);
  CHECK(r.state.steps == 9u);
}

TEST_CASE("rerank") {
  Rng rng(31);
  const auto corpus = alrank::testing::random_corpus(rng, 40, 20, 8);
  for (auto a : kAll) {
    const auto s = initialize_ranker(small_config(a), 3);
    std::vector<ScoredDocument> cands;
    for (std::size_t i = 0; i < corpus.size(); i += 2) cands.push_back({corpus[i].id, static_cast<double>(i)});
    const RankedList in(QueryId("q"), cands);
    const std::string qtext = "w1 w2 w3";
    const auto out = rerank(s, qtext, in, corpus);
    CHECK(out.query() == in.query());
    auto ids = [](const RankedList& l) {
      auto v = l.documents();
      std::sort(v.begin(), v.end());
      return v;
    };
    CHECK(ids(out) == ids(in));

    std::vector<std::pair<double, std::string>> brute;
    for (const auto& c : cands) brute.emplace_back(score(s, qtext, corpus.text(c.doc)), c.doc.str());
    std::sort(brute.begin(), brute.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    for (std::size_t i = 0; i < brute.size(); ++i) CHECK(out.items()[i].doc.str() == brute[i].second);
    CHECK(rerank(s, qtext, in, corpus) == out);
  }
  auto zc = small_config(Architecture::cross);
  zc.init = WeightInit::zero;
  const auto zero = initialize_ranker(zc, 0);
  const RankedList in(QueryId("q"), {{corpus[5].id, 3.0}, {corpus[1].id, 2.0}, {corpus[3].id, 1.0}});
  const auto out = rerank(zero, "w1", in, corpus);
  CHECK(out.at_rank(1).doc.str() == "d1");
  CHECK(out.at_rank(2).doc.str() == "d3");
  CHECK(out.at_rank(3).doc.str() == "d5");
}

TEST_CASE("dense retrieval equals reranking the whole corpus") {
  Rng rng(37);
  const auto corpus = alrank::testing::random_corpus(rng, 80, 25, 8);
  const auto s = initialize_ranker(small_config(Architecture::bi), 9);
  std::vector<ScoredDocument> all;
  for (const auto& e : corpus.entries()) all.push_back({e.id, 0.0});
  const RankedList everything(QueryId("q"), all);
  for (int i = 0; i < 10; ++i) {
    const auto text = alrank::testing::random_text(rng, 25, 0, 4);
    const auto dense = dense_retrieve(s, QueryId("q"), text, corpus);
    const auto re = rerank(s, text, everything, corpus);
    REQUIRE(dense.size() == re.size());
    for (std::size_t k = 0; k < dense.size(); ++k) {
      CHECK(dense.items()[k].doc == re.items()[k].doc);
      CHECK(dense.items()[k].score == doctest::Approx(re.items()[k].score).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(dense_retrieve(initialize_ranker(small_config(Architecture::cross), 1), QueryId("q"), "w", corpus),
                  Error);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  TempDir dir("ckpt");
  Rng rng(41);
  const auto t = toy(rng, 10);
  for (auto a : kAll) {
    const auto c = small_config(a);
    TrainOptions opt;
    opt.epochs = 2;
    const auto trained = train(initialize_ranker(c, 5), c, t.triplets, t.queries, t.corpus, opt).state;
    const auto path = dir / ("ckpt_" + to_string(a));
    save_checkpoint(trained, path);
    const auto back = load_checkpoint(path, &c);
    CHECK(back == trained);
    for (int i = 0; i < 20; ++i) {
      const auto q = alrank::testing::random_text(rng, 15, 1, 3);
      const auto d = alrank::testing::random_text(rng, 15, 1, 8);
      CHECK(score(back, q, d) == score(trained, q, d));
    }
  }
  const auto cross_cfg = small_config(Architecture::cross);
  const auto bi_cfg = small_config(Architecture::bi);
  CHECK_THROWS_AS(load_checkpoint(dir / "ckpt_cross", &bi_cfg), Error);
  auto wide = cross_cfg;
  wide.dim = 12;
  CHECK_THROWS_AS(load_checkpoint(dir / "ckpt_cross", &wide), Error);
  write_file(dir / "junk", "ALRKCKPT");
  CHECK_THROWS_AS(load_checkpoint(dir / "junk"), Error);
  CHECK_THROWS_AS(load_checkpoint(dir / "none"), Error);
}
