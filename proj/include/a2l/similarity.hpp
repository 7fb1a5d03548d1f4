#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "a2l/corpus.hpp"
#include "a2l/mlp.hpp"
#include "a2l/tagger.hpp"

namespace a2l {

// Where a head's sentence inputs come from: the task model's encoder
// (model-aware) or the frozen embedding table alone (model-isolated).
enum class EncoderSource { ModelEncoder, RawEmbedding };

std::string_view to_string(EncoderSource source);

/// Sentence vector fed to a head.
Vector head_input(const TaggerModel& model, const TaggedSentence& sentence, EncoderSource source);

struct SiameseHyper {
  std::size_t hidden = 32;
  double lr = 1e-3;
  int epochs = 41;
  std::size_t batch_size = 48;
};

struct SiameseHead {
  FeedForward net;
  EncoderSource source = EncoderSource::ModelEncoder;
  std::vector<double> train_loss_history;  // training MSE after each epoch

  Vector output(std::span<const double> input) const { return net.forward(input); }
};

struct PairInputs {
  std::vector<Vector> a;
  std::vector<Vector> b;
  std::vector<double> targets;
};

/// Encodes both sides of every pair. Model M is only read.
PairInputs siamese_inputs(const TaggerModel& model, const std::vector<SimilarityPair>& pairs,
                          EncoderSource source);

/// exp(-||o_a - o_b||_2).
double similarity_from_outputs(std::span<const double> o_a, std::span<const double> o_b);

// Mean squared error of exp(-||f(a) - f(b)||) against the targets, with the
// parameter gradient accumulated into `grads` when non-null.
double siamese_loss(const FeedForward& net, const PairInputs& inputs, std::vector<double>* grads);

SiameseHead train_siamese_head(const TaggerModel& model, const std::vector<SimilarityPair>& pairs,
                               const SiameseHyper& hyper, std::uint64_t seed,
                               EncoderSource source = EncoderSource::ModelEncoder);

double similarity_score(const SiameseHead& head, const TaggerModel& model,
                        const TaggedSentence& a, const TaggedSentence& b);

/// Cosine mapped to [0, 1] via (c + 1) / 2. Throws ZeroVector on a zero input.
double cosine01(std::span<const double> a, std::span<const double> b);

/// Cosine baseline over the task model's sentence encodings.
double cosine_score(const TaggerModel& model, const TaggedSentence& a, const TaggedSentence& b);

// A similarity function split into a per-sentence embedding and a cheap
// comparison, so an N x N matrix needs only N embeddings.
class PairScorer {
 public:
  virtual ~PairScorer() = default;
  virtual Vector embed(const TaggedSentence& sentence) const = 0;
  virtual double compare(std::span<const double> a, std::span<const double> b) const = 0;

  double score(const TaggedSentence& a, const TaggedSentence& b) const {
    return compare(embed(a), embed(b));
  }
  std::size_t embed_calls() const { return calls_.load(); }

 protected:
  void count_call() const { ++calls_; }

 private:
  mutable std::atomic<std::size_t> calls_{0};
};

// Model-aware Siamese (or Iso Siamese, by the head's source).
class SiameseScorer final : public PairScorer {
 public:
  SiameseScorer(std::shared_ptr<const SiameseHead> head, std::shared_ptr<const TaggerModel> model)
      : head_(std::move(head)), model_(std::move(model)) {}
  Vector embed(const TaggedSentence& sentence) const override;
  double compare(std::span<const double> a, std::span<const double> b) const override {
    return similarity_from_outputs(a, b);
  }

 private:
  std::shared_ptr<const SiameseHead> head_;
  std::shared_ptr<const TaggerModel> model_;
};

// Cosine over the task model's encodings.
class CosineScorer final : public PairScorer {
 public:
  explicit CosineScorer(std::shared_ptr<const TaggerModel> model) : model_(std::move(model)) {}
  Vector embed(const TaggedSentence& sentence) const override;
  double compare(std::span<const double> a, std::span<const double> b) const override {
    return cosine01(a, b);
  }

 private:
  std::shared_ptr<const TaggerModel> model_;
};

// Cosine over a frozen, model-independent bag of embeddings (InferSent-like).
class FrozenCosineScorer final : public PairScorer {
 public:
  explicit FrozenCosineScorer(std::shared_ptr<const EmbeddingTable> table) : table_(std::move(table)) {}
  Vector embed(const TaggedSentence& sentence) const override;
  double compare(std::span<const double> a, std::span<const double> b) const override {
    return cosine01(a, b);
  }

 private:
  std::shared_ptr<const EmbeddingTable> table_;
};

// Lower clamp for matrix entries so every entry stays in (0, 1].
inline constexpr double kMinSimilarity = 1e-12;

struct SimilarityMatrix {
  std::size_t n = 0;
  Matrix values;
};

/// Embeds every candidate once, then fills the symmetric matrix with unit diagonal.
SimilarityMatrix build_similarity_matrix(const PairScorer& scorer,
                                         const std::vector<TaggedSentence>& candidates);

std::string similarity_matrix_csv(const SimilarityMatrix& matrix);

std::string serialize_siamese(const SiameseHead& head);
SiameseHead deserialize_siamese(std::string_view text);

}  // namespace a2l
