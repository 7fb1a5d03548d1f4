#include <doctest.h>

#include <cmath>
#include <random>

#include "a2l/strategies.hpp"
#include "oracles.hpp"

using namespace a2l;

namespace {

PredictionRecord with_kbest(std::vector<double> scores) {
  PredictionRecord r;
  for (double s : scores) r.kbest.push_back({{0}, s});
  return r;
}

PredictionRecord with_max_probs(const std::vector<double>& smax) {
  PredictionRecord r;
  r.token_dists = Matrix(smax.size(), 2);
  for (std::size_t j = 0; j < smax.size(); ++j) {
    r.token_dists(j, 0) = smax[j];
    r.token_dists(j, 1) = 1.0 - smax[j];
  }
  r.src_len = r.pred_len = smax.size();
  return r;
}

PredictionRecord with_attention(std::size_t rows, std::size_t cols, std::vector<double> values) {
  PredictionRecord r;
  Matrix a(rows, cols);
  a.data() = std::move(values);
  r.attention = a;
  r.src_len = cols;
  r.pred_len = rows;
  return r;
}

std::vector<ScoredCandidate> scored(const std::vector<double>& s, bool higher) {
  std::vector<ScoredCandidate> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.push_back({i, s[i], higher});
  return out;
}

}  // namespace

TEST_CASE("margin: hand values") {
  CHECK(margin_score(with_kbest({-1.0, -3.0})) == doctest::Approx(2.0));
  CHECK(margin_score(with_kbest({-2.5, -2.5})) == 0.0);
  try {
    margin_score(with_kbest({-1.0}));
    FAIL("expected KBestTooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::KBestTooShort);
  }
}

TEST_CASE("margin: agrees with brute-force top-2 on a trained 3-token case") {
  const Corpus c = parse_conll("a X\nb Y\nc X\n\nb Y\nc Z\n");
  TaggerHyper h;
  h.dim = 8;
  h.epochs = 30;
  const TaggerModel m = train_tagger(c, h);
  const auto s = oracle::sentence({"a", "b", "c"});
  const auto rec = predict(m, s, 2);
  const auto all = oracle::enumerate_paths(emission_log_probs(m, s.tokens), m.log_T);
  CHECK(margin_score(rec) == doctest::Approx(all[0].score - all[1].score).epsilon(1e-9));
}

TEST_CASE("entropy: hand values and length normalization") {
  CHECK(entropy_score(with_max_probs({1.0, 1.0, 1.0})) == 0.0);
  // -1/2 * (2 * 0.5 ln 0.5)
  const double ref = -0.5 * (2.0 * 0.5 * std::log(0.5));
  CHECK(ref == doctest::Approx(0.34657).epsilon(1e-5));
  CHECK(entropy_score(with_max_probs({0.5, 0.5})) == doctest::Approx(0.34657359).epsilon(1e-6));
  const double one = entropy_score(with_max_probs({0.7, 0.9, 0.6}));
  CHECK(entropy_score(with_max_probs({0.7, 0.9, 0.6, 0.7, 0.9, 0.6})) == doctest::Approx(one));
  CHECK(one >= 0.0);
}

TEST_CASE("bald: hand values from pass outputs") {
  using Seq = std::vector<LabelId>;
  const Seq A{0, 1}, B{1, 1};
  CHECK(bald_from_outputs({A, A, B}) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  CHECK(bald_from_outputs({A, A, B}) == doctest::Approx(0.33333).epsilon(1e-4));
  std::vector<Seq> out(51);
  for (std::size_t i = 0; i < 51; ++i) out[i] = i < 17 ? A : Seq{static_cast<LabelId>(i), 0};
  CHECK(bald_from_outputs(out) == doctest::Approx(1.0 - 17.0 / 51.0).epsilon(1e-9));
  CHECK(bald_from_outputs(out) == doctest::Approx(0.66667).epsilon(1e-5));
  std::vector<Seq> distinct;
  for (LabelId i = 0; i < 5; ++i) distinct.push_back({i});
  CHECK(bald_from_outputs(distinct) == doctest::Approx(0.8));
}

TEST_CASE("bald: zero dropout gives zero, score bounded, deterministic") {
  const Corpus c = parse_conll("a X\nb Y\nc X\n\nd Y\ne Z\n");
  TaggerHyper h;
  h.dim = 8;
  h.epochs = 20;
  h.dropout_rate = 0.0;
  StrategyConfig cfg;
  cfg.kind = StrategyKind::Bald;
  cfg.bald_passes = 11;
  const auto s = oracle::sentence({"a", "b", "q", "e"});
  CHECK(bald_score(train_tagger(c, h), s, cfg, 3) == 0.0);
  h.dropout_rate = 0.9;
  const TaggerModel noisy = train_tagger(c, h);
  const double v = bald_score(noisy, s, cfg, 3);
  CHECK(v >= 0.0);
  CHECK(v <= 1.0 - 1.0 / 11.0 + 1e-12);
  CHECK(v == bald_score(noisy, s, cfg, 3));
}

TEST_CASE("lc: hand values") {
  PredictionRecord r;
  r.pred_len = 2;
  r.seq_logprob = -4.0;
  CHECK(lc_score(r) == doctest::Approx(-2.0));
  r.seq_logprob = 0.0;
  CHECK(lc_score(r) == 0.0);
  // halving P lowers the score by ln2 / n
  r.seq_logprob = -1.0;
  const double before = lc_score(r);
  r.seq_logprob = -1.0 + std::log(0.5);
  CHECK(before - lc_score(r) == doctest::Approx(std::log(2.0) / 2.0));
}

TEST_CASE("coverage: hand values and guards") {
  // column sums >= 1 everywhere
  CHECK(coverage_score(with_attention(2, 2, {0.5, 0.5, 0.5, 0.5})) == 0.0);
  // n(x)=2, column sums (0.5, 1.5)
  const auto r = with_attention(2, 2, {0.25, 0.75, 0.25, 0.75});
  CHECK(coverage_score(r) == doctest::Approx(-0.34657359).epsilon(1e-6));
  CHECK((std::log(0.5) + 0.0) / 2.0 == doctest::Approx(-0.34657).epsilon(1e-5));
  // zero column: floored, the lowest score of the lot
  const double floored = coverage_score(with_attention(1, 2, {1.0, 0.0}));
  CHECK(floored == doctest::Approx(std::log(kCoverageFloor) / 2.0));
  CHECK(floored < coverage_score(r));
  PredictionRecord none;
  none.src_len = 2;
  try {
    coverage_score(none);
    FAIL("expected MissingAttention");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingAttention);
  }
}

TEST_CASE("ads: printed kurtosis, hand values") {
  CHECK(oracle::kurtosis_ref({1.0, 0.0}) == doctest::Approx(1.0));
  CHECK(attention_kurtosis(std::vector<double>{1.0, 0.0}) == doctest::Approx(1.0));
  CHECK(attention_kurtosis(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == 0.0);
  CHECK(ads_score(with_attention(2, 3, {1 / 3.0, 1 / 3.0, 1 / 3.0, 1 / 3.0, 1 / 3.0, 1 / 3.0})) ==
        doctest::Approx(0.0));
  CHECK(ads_score(with_attention(2, 2, {1, 0, 0, 1})) == doctest::Approx(-1.0));
  std::mt19937_64 gen(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> row(2 + gen() % 6);
    double s = 0.0;
    for (double& v : row) s += (v = std::uniform_real_distribution<double>(0.01, 1.0)(gen));
    for (double& v : row) v /= s;
    CHECK(attention_kurtosis(row) == doctest::Approx(oracle::kurtosis_ref(row)).epsilon(1e-9));
  }
  try {
    ads_score(with_attention(1, 1, {1.0}));
    FAIL("expected DegenerateRow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateRow);
  }
}

TEST_CASE("ads and coverage are symmetric in source positions") {
  const auto a = with_attention(2, 3, {0.6, 0.3, 0.1, 0.2, 0.2, 0.6});
  const auto b = with_attention(2, 3, {0.1, 0.6, 0.3, 0.6, 0.2, 0.2});
  CHECK(ads_score(a) == doctest::Approx(ads_score(b)));
  CHECK(coverage_score(a) == doctest::Approx(coverage_score(b)));
}

TEST_CASE("selection: top fraction and threshold") {
  const auto s = scored({1, 3, 2, 4}, true);
  StrategyConfig cfg;
  cfg.mode = SelectionMode::TopFraction;
  cfg.fraction = 0.5;
  CHECK(select_candidates(s, cfg) == std::vector<std::size_t>{3, 1});
  cfg.fraction = 1.0;
  CHECK(select_candidates(s, cfg) == std::vector<std::size_t>{3, 1, 2, 0});
  cfg.mode = SelectionMode::Threshold;
  cfg.kind = StrategyKind::Entropy;
  cfg.threshold = 2.5;
  CHECK(select_candidates(s, cfg) == std::vector<std::size_t>{3, 1});
  // lower-is-uncertain: margin keeps M <= tau
  cfg.kind = StrategyKind::Margin;
  CHECK(select_candidates(scored({1, 3, 2, 4}, false), cfg) == std::vector<std::size_t>{0, 2});
  // ties go to the lower index
  cfg.mode = SelectionMode::TopFraction;
  cfg.fraction = 0.5;
  CHECK(select_candidates(scored({2, 2, 2, 2}, true), cfg) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("config: defaults and validation") {
  StrategyConfig cfg;
  CHECK(cfg.bald_passes == 51);
  CHECK(cfg.bald_dropout == 0.5);
  CHECK(StrategyConfig::default_threshold(StrategyKind::Margin) == 15.0);
  CHECK(StrategyConfig::default_threshold(StrategyKind::Entropy) == 40.0);
  CHECK(StrategyConfig::default_threshold(StrategyKind::Bald) == 0.2);
  cfg.fraction = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.kind = StrategyKind::Bald;
  cfg.bald_passes = 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  for (auto k : {StrategyKind::Margin, StrategyKind::Entropy, StrategyKind::Bald, StrategyKind::LeastConfidence,
                 StrategyKind::Coverage, StrategyKind::AttentionDistraction})
    CHECK(parse_strategy_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_strategy_kind("nope"), Error);
}

TEST_CASE("attention records: parse, serialize, score") {
  const auto rec = parse_attention_record(
      R"({"src_len": 2, "tgt_len": 2, "attention": [0.25, 0.75, 0.25, 0.75], "seq_logprob": -4.0})");
  CHECK(rec.src_len == 2);
  CHECK(rec.pred_len == 2);
  CHECK(score_record(rec, StrategyKind::LeastConfidence) == doctest::Approx(-2.0));
  CHECK(score_record(rec, StrategyKind::Coverage) == doctest::Approx(-0.34657359).epsilon(1e-6));
  const auto back = parse_attention_record(serialize_attention_record(rec));
  CHECK(*back.attention == *rec.attention);
  CHECK(back.seq_logprob == rec.seq_logprob);
  CHECK_THROWS_AS(parse_attention_record(R"({"src_len": 2, "tgt_len": 1, "attention": [1.0]})"), Error);
  CHECK_THROWS_AS(parse_attention_record(R"({"src_len": 2, "tgt_len": 1, "attention": [0.9, 0.9], "seq_logprob": 0})"),
                  Error);
  CHECK_THROWS_AS(score_record(rec, StrategyKind::Margin), Error);

  const auto synth = synthesize_attention_records(40, 8, 3);
  CHECK(synth.size() == 40);
  for (const auto& r : synth) {
    for (std::size_t i = 0; i < r.attention->rows(); ++i) {
      double s = 0.0;
      for (double v : r.attention->row(i)) s += v;
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(coverage_score(r) <= 0.0);
  }
}

TEST_CASE("scorer ranges on a trained model") {
  const Corpus c = parse_conll("a X\nb Y\nc X\n\nd Y\ne Z\nf X\n");
  TaggerHyper h;
  h.dim = 8;
  h.epochs = 40;
  const TaggerModel m = train_tagger(c, h);
  std::mt19937_64 gen(1);
  const std::vector<std::string> vocab{"a", "b", "c", "d", "e", "f", "g"};
  for (int t = 0; t < 30; ++t) {
    std::vector<std::string> toks(1 + gen() % 5);
    for (auto& tok : toks) tok = vocab[gen() % vocab.size()];
    const auto rec = predict(m, oracle::sentence(toks), 2);
    CHECK(margin_score(rec) >= 0.0);
    CHECK(entropy_score(rec) >= 0.0);
    CHECK(lc_score(rec) <= 0.0);
  }
}
