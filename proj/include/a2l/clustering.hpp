#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "a2l/corpus.hpp"
#include "a2l/mlp.hpp"
#include "a2l/similarity.hpp"
#include "a2l/tagger.hpp"

namespace a2l {

struct ClusterAssignment {
  std::size_t K = 0;
  std::vector<std::size_t> assignment;  // candidate position -> cluster id

  std::vector<std::size_t> sizes() const;
};

/// Row-normalized eigenvectors of the K smallest eigenvalues of I - D^-1/2 S D^-1/2.
Matrix spectral_embedding(const SimilarityMatrix& S, std::size_t K);

// Normalized-Laplacian spectral clustering: spectral_embedding followed by
// k-means (k-means++ seeding, 100 iterations, 5 restarts, best inertia).
ClusterAssignment spectral_cluster(const SimilarityMatrix& S, std::size_t K, std::uint64_t seed);

inline constexpr double kProbClamp = 1e-12;

/// Triplet loss on K-dim distributions:
///   -l1 ln p_b[i_a] - l2 ln(1 - p_c[i_a]) + l3 sum_k p_b[k] ln p_b[k],
/// i_a = argmax p_a, probabilities clamped to [1e-12, 1 - 1e-12] inside logs.
double integrated_loss(double lambda1, double lambda2, double lambda3, std::span<const double> p_a,
                       std::span<const double> p_b, std::span<const double> p_c);

struct IntegratedHyper {
  std::size_t clusters = 20;
  std::size_t hidden = 32;
  double lr = 1e-3;
  int epochs = 41;
  std::size_t batch_size = 48;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 0.1;
};

// Softmax clustering network over head inputs.
struct IntegratedHead {
  FeedForward net;  // logits
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 0.1;
  EncoderSource source = EncoderSource::ModelEncoder;
  std::vector<double> train_loss_history;

  std::size_t K() const { return net.out; }
  Vector probabilities(std::span<const double> input) const { return softmax(net.forward(input)); }
};

double integrated_loss(const IntegratedHead& head, std::span<const double> p_a,
                       std::span<const double> p_b, std::span<const double> p_c);

/// (a, b) similar, c a negative.
struct Triplet {
  TaggedSentence a;
  TaggedSentence b;
  TaggedSentence c;
};

// Positives are pairs with target >= threshold; each negative is a sentence
// whose Jaccard overlap with `a` is below the threshold.
std::vector<Triplet> triplets_from_pairs(const std::vector<SimilarityPair>& pairs, std::size_t n,
                                         std::uint64_t seed, double threshold = 0.5);

struct TripletInputs {
  std::vector<Vector> a, b, c;
};

TripletInputs triplet_inputs(const TaggerModel& model, const std::vector<Triplet>& triplets,
                             EncoderSource source);

/// Mean triplet loss; accumulates the parameter gradient into `grads` when non-null.
double triplet_loss(const IntegratedHead& head, const TripletInputs& inputs, std::vector<double>* grads);

IntegratedHead train_integrated_head(const TaggerModel& model, const std::vector<Triplet>& triplets,
                                     const IntegratedHyper& hyper, std::uint64_t seed,
                                     EncoderSource source = EncoderSource::ModelEncoder);

/// Each candidate goes to its highest-probability unit (ties -> lowest id).
ClusterAssignment assign_clusters(const IntegratedHead& head, const TaggerModel& model,
                                  const std::vector<TaggedSentence>& candidates);

// Up to `per_cluster` most-uncertain members of every non-empty cluster
// (ties -> lower position), ordered by cluster id then uncertainty.
std::vector<std::size_t> pick_representatives(const ClusterAssignment& assign,
                                              std::span<const double> uncertainty,
                                              std::size_t per_cluster);

/// CSV "candidate_index,cluster_id,picked" with one row per candidate.
std::string cluster_assignment_csv(const ClusterAssignment& assign,
                                   const std::vector<std::size_t>& candidate_indices,
                                   const std::vector<std::size_t>& picked_positions);

std::string serialize_integrated(const IntegratedHead& head);
IntegratedHead deserialize_integrated(std::string_view text);

}  // namespace a2l
