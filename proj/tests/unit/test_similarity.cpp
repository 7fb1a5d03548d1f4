#include <doctest.h>

#include <cmath>
#include <random>

#include "a2l/similarity.hpp"
#include "oracles.hpp"

using namespace a2l;

namespace {

Corpus small_corpus(std::uint64_t seed = 1) {
  SyntheticCorpusConfig cfg;
  cfg.n_templates = 12;
  cfg.copies_per_template = 3;
  cfg.vocab_size = 60;
  cfg.seed = seed;
  return generate_synthetic_corpus(cfg);
}

TaggerHyper small_hyper() {
  TaggerHyper h;
  h.dim = 12;
  h.epochs = 40;
  return h;
}

Vector random_vec(std::size_t n, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vector v(n);
  for (double& x : v) x = nd(gen);
  return v;
}

}  // namespace

TEST_CASE("similarity kernel: range, identity, symmetry") {
  std::mt19937_64 gen(1);
  for (int t = 0; t < 1000; ++t) {
    const Vector a = random_vec(5, gen), b = random_vec(5, gen);
    const double s = similarity_from_outputs(a, b);
    CHECK(s > 0.0);
    CHECK(s <= 1.0);
    CHECK(similarity_from_outputs(a, a) == 1.0);
    CHECK(similarity_from_outputs(b, a) == s);
  }
  const Vector o1{0.0, 0.0}, o2{0.6, 0.8};
  CHECK(similarity_from_outputs(o1, o2) == doctest::Approx(0.36788).epsilon(1e-5));
  CHECK(similarity_from_outputs(o1, o2) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("Siamese MSE gradient matches central differences") {
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(trial);
    FeedForward net(4, 3, 3, 0.5, rng);
    PairInputs in;
    for (int i = 0; i < 5; ++i) {
      in.a.push_back(random_vec(4, gen));
      in.b.push_back(random_vec(4, gen));
      in.targets.push_back(std::uniform_real_distribution<double>(0, 1)(gen));
    }
    std::vector<double> grads;
    siamese_loss(net, in, &grads);
    auto f = [&](const std::vector<double>& p) {
      FeedForward n2 = net;
      n2.params = p;
      return siamese_loss(n2, in, nullptr);
    };
    CHECK(oracle::max_rel_error(grads, oracle::finite_gradient(f, net.params)) < 1e-4);
  }
}

TEST_CASE("Siamese training: degenerate data collapses to similarity 1") {
  const Corpus c = small_corpus();
  const TaggerModel m = train_tagger(c, small_hyper());
  std::vector<SimilarityPair> pairs;
  for (const auto& s : c.sentences) pairs.push_back({s, s, 1.0});
  SiameseHyper h;
  h.epochs = 5;
  const SiameseHead head = train_siamese_head(m, pairs, h, 3);
  CHECK(head.train_loss_history.back() < 1e-3);
}

TEST_CASE("Siamese training: loss falls, deterministic, M untouched") {
  const Corpus c = small_corpus();
  const TaggerModel m = train_tagger(c, small_hyper());
  const Matrix W_before = m.W_emit;
  const auto pairs = generate_pair_dataset(c, 300, 2);
  SiameseHyper h;
  h.epochs = 30;
  h.lr = 3e-3;
  const SiameseHead a = train_siamese_head(m, pairs, h, 7);
  const SiameseHead b = train_siamese_head(m, pairs, h, 7);
  CHECK(a.net == b.net);
  CHECK(a.train_loss_history == b.train_loss_history);
  CHECK(a.train_loss_history.back() < a.train_loss_history.front());
  CHECK(m.W_emit == W_before);
  CHECK_THROWS_AS(train_siamese_head(m, {}, h, 7), Error);
}

TEST_CASE("similarity and cosine scores") {
  const Corpus c = small_corpus();
  const TaggerModel m = train_tagger(c, small_hyper());
  SiameseHyper h;
  h.epochs = 3;
  const SiameseHead head = train_siamese_head(m, generate_pair_dataset(c, 50, 1), h, 1);
  const auto& s0 = c.sentences[0];
  const auto& s5 = c.sentences[5];
  CHECK(similarity_score(head, m, s0, s0) == 1.0);
  CHECK(similarity_score(head, m, s0, s5) == similarity_score(head, m, s5, s0));
  CHECK(cosine_score(m, s0, s0) == doctest::Approx(1.0));

  const Vector x{1.0, 0.0}, y{0.0, 2.0}, z{-3.0, 0.0}, zero{0.0, 0.0};
  CHECK(cosine01(x, y) == doctest::Approx(0.5));
  CHECK(cosine01(x, z) == doctest::Approx(0.0));
  CHECK(cosine01(x, x) == doctest::Approx(1.0));
  try {
    cosine01(x, zero);
    FAIL("expected ZeroVector");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroVector);
  }
}

TEST_CASE("similarity matrix: caching, naive agreement, invariants") {
  const Corpus c = small_corpus();
  auto m = std::make_shared<const TaggerModel>(train_tagger(c, small_hyper()));
  SiameseHyper h;
  h.epochs = 3;
  auto head = std::make_shared<const SiameseHead>(train_siamese_head(*m, generate_pair_dataset(c, 80, 1), h, 2));
  const SiameseScorer scorer(head, m);

  std::vector<TaggedSentence> cand(c.sentences.begin(), c.sentences.begin() + 3);
  const auto S3 = build_similarity_matrix(scorer, cand);
  CHECK(S3.n == 3);
  CHECK(S3.values.data().size() == 9);
  CHECK(scorer.embed_calls() == 3);

  cand.assign(c.sentences.begin(), c.sentences.begin() + 10);
  const auto S = build_similarity_matrix(scorer, cand);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(S.values(i, i) == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t j = 0; j < 10; ++j) {
      CHECK(S.values(i, j) == doctest::Approx(S.values(j, i)).epsilon(1e-9));
      CHECK(S.values(i, j) > 0.0);
      CHECK(S.values(i, j) <= 1.0);
      if (i != j) CHECK(S.values(i, j) == similarity_score(*head, *m, cand[i], cand[j]));
    }
  }

  const std::vector<TaggedSentence> twins{c.sentences[0], c.sentences[0]};
  const auto T = build_similarity_matrix(scorer, twins);
  for (double v : T.values.data()) CHECK(v == 1.0);
  CHECK_THROWS_AS(build_similarity_matrix(scorer, {c.sentences[0]}), Error);
  CHECK(similarity_matrix_csv(T) == "1,1\n1,1\n");
}

TEST_CASE("model awareness: frozen baseline ignores retraining, model-aware scorers follow it") {
  const Corpus c = small_corpus();
  auto before = std::make_shared<const TaggerModel>(train_tagger(subset(c, {0, 1, 2}), small_hyper()));
  auto after = std::make_shared<const TaggerModel>(train_tagger(c, small_hyper()));
  const std::vector<TaggedSentence> cand(c.sentences.begin() + 3, c.sentences.begin() + 9);

  const auto f1 = build_similarity_matrix(FrozenCosineScorer(before->embed), cand);
  const auto f2 = build_similarity_matrix(FrozenCosineScorer(after->embed), cand);
  CHECK(f1.values == f2.values);

  const auto c1 = build_similarity_matrix(CosineScorer(before), cand);
  const auto c2 = build_similarity_matrix(CosineScorer(after), cand);
  CHECK_FALSE(c1.values == c2.values);

  // encodings differ => Siamese training inputs differ
  const auto pairs = generate_pair_dataset(c, 40, 5);
  const auto in1 = siamese_inputs(*before, pairs, EncoderSource::ModelEncoder);
  const auto in2 = siamese_inputs(*after, pairs, EncoderSource::ModelEncoder);
  CHECK_FALSE(in1.a == in2.a);
  SiameseHyper h;
  h.epochs = 3;
  CHECK_FALSE(train_siamese_head(*before, pairs, h, 1).net == train_siamese_head(*after, pairs, h, 1).net);
  // the isolated source does not see the model
  const auto r1 = siamese_inputs(*before, pairs, EncoderSource::RawEmbedding);
  const auto r2 = siamese_inputs(*after, pairs, EncoderSource::RawEmbedding);
  CHECK(r1.a == r2.a);
}

TEST_CASE("Siamese checkpoint round trip") {
  const Corpus c = small_corpus();
  const TaggerModel m = train_tagger(c, small_hyper());
  SiameseHyper h;
  h.epochs = 2;
  const SiameseHead head = train_siamese_head(m, generate_pair_dataset(c, 30, 1), h, 1, EncoderSource::RawEmbedding);
  const SiameseHead back = deserialize_siamese(serialize_siamese(head));
  CHECK(back.net == head.net);
  CHECK(back.source == head.source);
  CHECK(back.train_loss_history == head.train_loss_history);
}
