#include <doctest.h>

#include <set>

#include "a2l/loop.hpp"
#include "oracles.hpp"

using namespace a2l;

namespace {

struct Fixture {
  Corpus pool, test;
  std::vector<SimilarityPair> aux;
};

Fixture fixture() {
  SyntheticCorpusConfig cfg;
  cfg.n_templates = 24;
  cfg.copies_per_template = 6;
  cfg.vocab_size = 150;
  cfg.seed = 3;
  const Corpus all = generate_synthetic_corpus(cfg);
  std::vector<std::size_t> p, t;
  for (std::size_t i = 0; i < all.size(); ++i) (i % 6 < 5 ? p : t).push_back(i);
  SyntheticCorpusConfig aux = cfg;
  aux.seed = 99;
  return {subset(all, p), subset(all, t), generate_pair_dataset(generate_synthetic_corpus(aux), 300, 1)};
}

LoopConfig small_config(DedupMode mode) {
  LoopConfig cfg;
  cfg.dedup = mode;
  cfg.initial_fraction = 0.05;
  cfg.per_iter_fraction = 0.2;
  cfg.iterations = 4;
  cfg.clusters = 6;
  cfg.per_cluster = 2;
  cfg.retrain_period = 2;
  cfg.tagger.dim = 64;
  cfg.tagger.epochs = 60;
  cfg.siamese.epochs = 5;
  cfg.integrated.epochs = 5;
  cfg.n_triplets = 200;
  cfg.record_wall_time = false;
  cfg.seed = 4;
  return cfg;
}

}  // namespace

TEST_CASE("oracle: token cost, empty no-op, no re-annotation") {
  const Corpus c = parse_conll("a O\nb O\nc O\n\nd O\ne O\nf O\ng O\nh O\n\ni O\n");
  Oracle o(c);
  const std::vector<std::size_t> idx{0, 1};
  const auto got = oracle_annotate(o, idx);
  CHECK(got.size() == 2);
  CHECK(o.cost_tokens() == 8);
  CHECK(o.cost_sentences() == 2);
  CHECK(oracle_annotate(o, {}).empty());
  CHECK(o.cost_tokens() == 8);
  CHECK(o.is_labeled(0));
  CHECK_FALSE(o.is_labeled(2));
  const std::vector<std::size_t> again{2, 1};
  try {
    o.annotate(again);
    FAIL("expected AlreadyLabeled");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AlreadyLabeled);
  }
  CHECK_FALSE(o.is_labeled(2));  // the failed call revealed nothing
  const std::vector<std::size_t> twice{2, 2};
  CHECK_THROWS_AS(o.annotate(twice), Error);
}

TEST_CASE("token F1: hand cases") {
  using V = std::vector<std::vector<LabelId>>;
  CHECK(token_f1(V{{1, 2, 0}}, V{{1, 2, 0}}, LabelId{0}) == 1.0);
  CHECK(token_f1(V{{2, 1}}, V{{1, 2}}, LabelId{0}) == 0.0);
  // gold (1, 1, 0), pred (1, 0, 1): TP=1, FN=1, FP=1 -> P=R=0.5
  CHECK(token_f1(V{{1, 0, 1}}, V{{1, 1, 0}}, LabelId{0}) == doctest::Approx(0.5));
  // without an outside label every token counts: 1 right out of 3
  CHECK(token_f1(V{{1, 0, 1}}, V{{1, 1, 0}}) == doctest::Approx(1.0 / 3.0));
  CHECK(token_f1(V{{0, 0}}, V{{0, 0}}, LabelId{0}) == 1.0);
  try {
    token_f1(V{{1, 2}}, V{{1}});
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
  CHECK_THROWS_AS(token_f1(V{{1}}, V{}), Error);
}

TEST_CASE("data fraction to target") {
  const std::vector<std::pair<double, double>> curve{{0.1, 0.8}, {0.2, 0.9}};
  CHECK(*data_fraction_to_target(curve, 0.9) == 0.2);
  CHECK_FALSE(data_fraction_to_target(curve, 0.95).has_value());
  CHECK(*data_fraction_to_target(curve, 0.0) == 0.1);
  CHECK_THROWS_AS(data_fraction_to_target({{0.2, 0.5}, {0.2, 0.6}}, 0.5), Error);
}

TEST_CASE("config validation") {
  LoopConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.per_cluster == 2);
  CHECK(cfg.retrain_period == 10);
  CHECK(cfg.initial_fraction == 0.02);
  CHECK(cfg.per_iter_fraction == 0.02);
  cfg.initial_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.strategy.kind = StrategyKind::Coverage;
  CHECK_THROWS_AS(cfg.validate(), Error);
  for (auto m : {DedupMode::MaSiamese, DedupMode::IntModel, DedupMode::Cosine, DedupMode::InferSentLike,
                 DedupMode::IsoSiamese, DedupMode::None, DedupMode::Random})
    CHECK(parse_dedup_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_dedup_mode("cluster"), Error);
}

TEST_CASE("loop: every dedup mode keeps its invariants") {
  const Fixture f = fixture();
  const std::size_t budget = static_cast<std::size_t>(std::llround(0.2 * f.pool.size()));
  for (auto mode : {DedupMode::MaSiamese, DedupMode::IntModel, DedupMode::Cosine, DedupMode::InferSentLike,
                    DedupMode::IsoSiamese, DedupMode::None, DedupMode::Random}) {
    CAPTURE(to_string(mode));
    const LoopConfig cfg = small_config(mode);
    const RunLog log = run_active2_learning(cfg, f.pool, f.test, f.aux);
    REQUIRE(log.records.size() == cfg.iterations + 1);
    CHECK(log.method == to_string(mode));
    std::set<std::size_t> annotated(log.records[0].kept.begin(), log.records[0].kept.end());
    for (std::size_t i = 1; i < log.records.size(); ++i) {
      const auto& r = log.records[i];
      const auto& prev = log.records[i - 1];
      CHECK(r.iter == i);
      CHECK(r.labeled_fraction >= prev.labeled_fraction);
      CHECK(r.n_labeled == prev.n_labeled + r.kept.size());
      CHECK(r.cost_sentences == r.n_labeled);
      CHECK(r.kept.size() <= r.selected.size());
      const std::set<std::size_t> sel(r.selected.begin(), r.selected.end());
      for (std::size_t k : r.kept) {
        CHECK(sel.count(k) == 1);
        CHECK(annotated.insert(k).second);
      }
      CHECK(r.test_f1 >= 0.0);
      CHECK(r.test_f1 <= 1.0);
      CHECK(r.head_retrained == (uses_head(mode) && i % cfg.retrain_period == 0));
      if (mode == DedupMode::None) CHECK(r.kept == r.selected);
      if (mode == DedupMode::Random) {
        CHECK(r.selected.size() == budget);
        CHECK(r.kept == r.selected);
      }
      if (mode != DedupMode::None && mode != DedupMode::Random) {
        CHECK(r.kept.size() <= cfg.clusters * cfg.per_cluster);
        std::size_t total = 0;
        for (auto s : r.cluster_sizes) total += s;
        CHECK(total == r.selected.size());
      }
    }
    CHECK(log.final_model != nullptr);
  }
}

TEST_CASE("loop: identical config gives an identical run log") {
  const Fixture f = fixture();
  const LoopConfig cfg = small_config(DedupMode::MaSiamese);
  const RunLog a = run_active2_learning(cfg, f.pool, f.test, f.aux);
  const RunLog b = run_active2_learning(cfg, f.pool, f.test, f.aux);
  CHECK(a.records == b.records);
  CHECK(runlog_to_jsonl(a) == runlog_to_jsonl(b));
  CHECK(runlog_csv(a) == runlog_csv(b));
  LoopConfig other = cfg;
  other.seed = 5;
  CHECK_FALSE(run_active2_learning(other, f.pool, f.test, f.aux).records == a.records);
}

TEST_CASE("loop: dedup spreads the batch over more templates than the None prefix") {
  const Fixture f = fixture();
  LoopConfig cfg = small_config(DedupMode::MaSiamese);
  cfg.iterations = 1;
  cfg.per_iter_fraction = 0.4;
  const RunLog a2l = run_active2_learning(cfg, f.pool, f.test, f.aux);
  cfg.dedup = DedupMode::None;
  const RunLog none = run_active2_learning(cfg, f.pool, f.test, f.aux);
  const auto& kept = a2l.records[1].kept;
  // same model and scores at iteration 1, so the selections coincide
  CHECK(a2l.records[1].selected == none.records[1].selected);
  std::set<int> t_a2l, t_none;
  for (std::size_t i : kept) t_a2l.insert(*f.pool.sentences[i].template_id);
  for (std::size_t i = 0; i < kept.size(); ++i) t_none.insert(*f.pool.sentences[none.records[1].selected[i]].template_id);
  CHECK(t_a2l.size() > t_none.size());
}

TEST_CASE("loop: pool exhaustion ends the run early") {
  const Fixture f = fixture();
  LoopConfig cfg = small_config(DedupMode::None);
  cfg.per_iter_fraction = 0.5;
  cfg.iterations = 10;
  const RunLog log = run_active2_learning(cfg, f.pool, f.test, f.aux);
  CHECK(log.budget_exhausted);
  CHECK(log.records.size() < 11);
  CHECK(log.records.back().n_labeled == f.pool.size());
  CHECK(log.records.back().labeled_fraction == 1.0);
}

TEST_CASE("loop: rejects bad inputs") {
  const Fixture f = fixture();
  CHECK_THROWS_AS(run_active2_learning(small_config(DedupMode::MaSiamese), f.pool, f.test, {}), Error);
  CHECK_THROWS_AS(run_active2_learning(small_config(DedupMode::None), Corpus{}, f.test, f.aux), Error);
}

TEST_CASE("run log: jsonl round trip and csv layout") {
  const Fixture f = fixture();
  LoopConfig cfg = small_config(DedupMode::Cosine);
  cfg.iterations = 2;
  const RunLog log = run_active2_learning(cfg, f.pool, f.test, f.aux);
  const RunLog back = runlog_from_jsonl(runlog_to_jsonl(log), log.method, log.seed);
  CHECK(back.records == log.records);
  const std::string csv = runlog_csv(log);
  CHECK(csv.rfind("iter,labeled_fraction,n_selected,n_kept,test_f1,cost_tokens,wall_ms\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK_THROWS_AS(runlog_from_jsonl("{\"iter\": 1}\n", "x", 0), Error);
}
