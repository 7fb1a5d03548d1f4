#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "a2l/common.hpp"
#include "a2l/corpus.hpp"

namespace a2l {

/// Frozen hashed token embeddings: 2^15 buckets, entries uniform(-0.5, 0.5)/dim.
class EmbeddingTable {
 public:
  static constexpr std::size_t kBuckets = std::size_t{1} << 15;

  EmbeddingTable(std::size_t dim, std::uint64_t seed);

  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }

  static std::size_t bucket(std::string_view token);
  std::span<const double> row(std::size_t bucket) const {
    return {values_.data() + bucket * dim_, dim_};
  }
  std::span<const double> lookup(std::string_view token) const { return row(bucket(token)); }

  // Input features for a token: the embedding rescaled by dim so that
  // entries are uniform(-0.5, 0.5).
  Vector features(std::string_view token) const;

  /// Model-independent sentence vector: mean of token features.
  Vector mean_features(const std::vector<std::string>& tokens) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::vector<double> values_;
};

std::shared_ptr<const EmbeddingTable> shared_embedding_table(std::size_t dim, std::uint64_t seed);

struct TaggerHyper {
  double lr = 0.05;
  int epochs = 150;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  std::size_t dim = 256;
  std::uint64_t embedding_seed = 7;
  double dropout_rate = 0.5;
};

// Linear-chain tagger: softmax emissions over hashed-embedding features and
// count-based label transitions. Immutable once trained.
struct TaggerModel {
  std::shared_ptr<const EmbeddingTable> embed;
  Matrix W_emit;  // labels x dim
  Vector b_emit;  // labels
  Matrix log_T;   // labels x labels, row-stochastic in probability space
  double dropout_rate = 0.0;
  std::size_t label_count = 0;

  std::size_t dim() const { return embed->dim(); }
};

struct ScoredSequence {
  std::vector<LabelId> labels;
  double score = 0.0;
};

// Everything the uncertainty scorers consume. Tagging predictions fill the
// token-level fields; translation records carry attention and seq_logprob.
struct PredictionRecord {
  Matrix token_dists;                 // n(x) x |O|
  std::vector<ScoredSequence> kbest;  // descending score
  Matrix token_encodings;             // n(x) x d
  Vector encoding;                    // mean of token_encodings
  std::optional<Matrix> attention;    // n(y) x n(x)
  std::size_t src_len = 0;            // n(x)
  std::size_t pred_len = 0;           // n(y)
  double seq_logprob = 0.0;           // log P(y|x)
};

/// One token's training evidence: feature bucket plus label counts.
struct EmissionExample {
  std::size_t bucket = 0;
  std::vector<double> label_counts;
};

// Collapses the labeled tokens of `corpus` to unique feature buckets.
std::vector<EmissionExample> collect_emission_examples(const Corpus& corpus,
                                                       std::size_t label_count);

// Mean token cross-entropy plus (l2/2)||W||^2, with gradients when the
// output pointers are non-null.
double emission_loss(const EmbeddingTable& embed, const Matrix& W, const Vector& b,
                     const std::vector<EmissionExample>& data, double l2, Matrix* grad_W,
                     Vector* grad_b);

/// Add-one smoothed label bigram log-probabilities.
Matrix transition_log_probs(const Corpus& corpus, std::size_t label_count);

TaggerModel train_tagger(const Corpus& corpus, const TaggerHyper& hyper);

/// Inverted-dropout mask applied to a feature vector: kept entries are scaled by 1/(1-p).
Vector apply_dropout(std::span<const double> features, double rate, Rng& rng);

/// Per-token label log-probabilities; masked when `dropout_seed` is given.
Matrix emission_log_probs(const TaggerModel& model, const std::vector<std::string>& tokens,
                          std::optional<std::uint64_t> dropout_seed = std::nullopt);

/// Path score: sum of emission log-probabilities plus transition log-probabilities.
double path_score(const Matrix& log_emissions, const Matrix& log_T,
                  const std::vector<LabelId>& labels);

// k highest-scoring label sequences by list Viterbi. Equal scores are
// ordered by lower label index along the path.
std::vector<ScoredSequence> kbest_viterbi(const Matrix& log_emissions, const Matrix& log_T,
                                          std::size_t k);

PredictionRecord predict(const TaggerModel& model, const TaggedSentence& sentence, std::size_t k,
                         std::optional<std::uint64_t> dropout_seed = std::nullopt);

/// Best label sequence only (Viterbi with k = 1).
std::vector<LabelId> decode(const TaggerModel& model, const TaggedSentence& sentence);

// Model-aware token feature: x + W^T softmax(W x + b), where x is the token's
// frozen feature vector. Reduces to x for an untrained (zero) emission layer.
Vector transform_token(const TaggerModel& model, std::span<const double> features);

/// Mean of the transformed token features.
Vector encode_sentence(const TaggerModel& model, const TaggedSentence& sentence);

// Text checkpoint. The embedding table is stored by (dim, seed) and
// regenerated; all trained parameters are written at full precision.
std::string serialize_tagger(const TaggerModel& model);
TaggerModel deserialize_tagger(std::string_view text);

}  // namespace a2l
