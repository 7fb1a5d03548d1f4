#include "a2l/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "a2l/linalg.hpp"
#include "a2l/optim.hpp"

namespace a2l {

std::vector<std::size_t> ClusterAssignment::sizes() const {
  std::vector<std::size_t> out(K, 0);
  for (std::size_t c : assignment) ++out.at(c);
  return out;
}

Matrix spectral_embedding(const SimilarityMatrix& S, std::size_t K) {
  const std::size_t n = S.n;
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) d += S.values(i, j);
    if (!(d > 0.0)) throw Error(ErrorCode::DegenerateDegree, "row " + std::to_string(i) + " has zero degree");
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  Matrix L(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      L(i, j) = (i == j ? 1.0 : 0.0) - inv_sqrt_deg[i] * S.values(i, j) * inv_sqrt_deg[j];

  const EigenDecomposition eig = jacobi_eigen(L);
  Matrix U(n, K);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < K; ++c) U(i, c) = eig.vectors(i, c);
    const double norm = norm2(U.row(i));
    if (norm > 1e-12)
      for (double& v : U.row(i)) v /= norm;
  }
  return U;
}

ClusterAssignment spectral_cluster(const SimilarityMatrix& S, std::size_t K, std::uint64_t seed) {
  if (K < 2 || K > S.n) throw Error(ErrorCode::InvalidConfig, "spectral clustering needs 2 <= K <= n");
  const Matrix U = spectral_embedding(S, K);
  const KMeansResult km = kmeans(U, K, seed, 100, 5);
  return {K, km.assignment};
}

double integrated_loss(double lambda1, double lambda2, double lambda3, std::span<const double> p_a,
                       std::span<const double> p_b, std::span<const double> p_c) {
  auto clamp = [](double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); };
  const std::size_t ia = argmax(p_a);
  double loss = -lambda1 * std::log(clamp(p_b[ia])) - lambda2 * std::log(1.0 - clamp(p_c[ia]));
  double neg_entropy = 0.0;
  for (double p : p_b) neg_entropy += p * std::log(clamp(p));
  return loss + lambda3 * neg_entropy;
}

double integrated_loss(const IntegratedHead& head, std::span<const double> p_a,
                       std::span<const double> p_b, std::span<const double> p_c) {
  return integrated_loss(head.lambda1, head.lambda2, head.lambda3, p_a, p_b, p_c);
}

std::vector<Triplet> triplets_from_pairs(const std::vector<SimilarityPair>& pairs, std::size_t n,
                                         std::uint64_t seed, double threshold) {
  std::vector<const SimilarityPair*> positives;
  for (const auto& p : pairs)
    if (p.target >= threshold) positives.push_back(&p);
  if (positives.empty() || n == 0)
    throw Error(ErrorCode::InvalidConfig, "no positive pairs to build triplets from");

  Rng rng(derive_seed(seed, 0x7217));
  std::vector<Triplet> out;
  out.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const SimilarityPair& pos = *positives[rng.below(positives.size())];
    const TaggedSentence* neg = nullptr;
    for (int attempt = 0; attempt < 32 && !neg; ++attempt) {
      const SimilarityPair& other = pairs[rng.below(pairs.size())];
      const TaggedSentence& cand = rng.bernoulli(0.5) ? other.sent_a : other.sent_b;
      if (multiset_jaccard(pos.sent_a.tokens, cand.tokens) < threshold) neg = &cand;
    }
    if (!neg) continue;
    out.push_back({pos.sent_a, pos.sent_b, *neg});
  }
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, "could not find negatives for any triplet");
  return out;
}

TripletInputs triplet_inputs(const TaggerModel& model, const std::vector<Triplet>& triplets,
                             EncoderSource source) {
  TripletInputs in;
  for (const auto& t : triplets) {
    in.a.push_back(head_input(model, t.a, source));
    in.b.push_back(head_input(model, t.b, source));
    in.c.push_back(head_input(model, t.c, source));
  }
  return in;
}

namespace {

double triplet_batch(const IntegratedHead& head, const TripletInputs& in,
                     const std::vector<std::size_t>& batch, std::vector<double>* grads) {
  const FeedForward& net = head.net;
  if (grads) grads->assign(net.param_count(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  const std::size_t K = net.out;
  auto in_range = [](double p) { return p > kProbClamp && p < 1.0 - kProbClamp; };
  auto clamp = [](double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); };

  double loss = 0.0;
  FeedForward::Cache cb, cc;
  Vector g(K);
  for (std::size_t idx : batch) {
    const Vector pa = softmax(net.forward(in.a[idx]));
    const Vector pb = softmax(net.forward(in.b[idx], grads ? &cb : nullptr));
    const Vector pc = softmax(net.forward(in.c[idx], grads ? &cc : nullptr));
    loss += scale * integrated_loss(head, pa, pb, pc);
    if (!grads) continue;
    const std::size_t ia = argmax(pa);

    // d/dp_b of the first and third terms, then through the softmax.
    Vector dpb(K, 0.0);
    if (in_range(pb[ia])) dpb[ia] -= head.lambda1 / pb[ia];
    for (std::size_t k = 0; k < K; ++k)
      dpb[k] += head.lambda3 * (std::log(clamp(pb[k])) + (in_range(pb[k]) ? 1.0 : 0.0));
    double mean = 0.0;
    for (std::size_t k = 0; k < K; ++k) mean += dpb[k] * pb[k];
    for (std::size_t k = 0; k < K; ++k) g[k] = scale * pb[k] * (dpb[k] - mean);
    net.backward(cb, g, *grads);

    if (in_range(pc[ia]) && head.lambda2 != 0.0) {
      const double dpc = head.lambda2 / (1.0 - pc[ia]);
      for (std::size_t k = 0; k < K; ++k) g[k] = scale * dpc * pc[ia] * ((k == ia ? 1.0 : 0.0) - pc[k]);
      net.backward(cc, g, *grads);
    }
  }
  return loss;
}

}  // namespace

double triplet_loss(const IntegratedHead& head, const TripletInputs& inputs, std::vector<double>* grads) {
  std::vector<std::size_t> all(inputs.a.size());
  std::iota(all.begin(), all.end(), 0);
  if (all.empty()) return 0.0;
  return triplet_batch(head, inputs, all, grads);
}

IntegratedHead train_integrated_head(const TaggerModel& model, const std::vector<Triplet>& triplets,
                                     const IntegratedHyper& hyper, std::uint64_t seed,
                                     EncoderSource source) {
  if (triplets.empty()) throw Error(ErrorCode::InvalidConfig, "integrated head needs triplets");
  if (hyper.clusters < 2) throw Error(ErrorCode::InvalidConfig, "integrated head needs K >= 2");
  if (hyper.hidden == 0 || hyper.batch_size == 0 || hyper.epochs < 1 || !(hyper.lr > 0.0))
    throw Error(ErrorCode::InvalidConfig, "invalid integrated-head hyper-parameters");

  const TripletInputs inputs = triplet_inputs(model, triplets, source);
  Rng rng(derive_seed(seed, 0x1c7));
  IntegratedHead head;
  head.lambda1 = hyper.lambda1;
  head.lambda2 = hyper.lambda2;
  head.lambda3 = hyper.lambda3;
  head.source = source;
  head.net = FeedForward(model.dim(), hyper.hidden, hyper.clusters, 1.0, rng);
  std::vector<Vector> all = inputs.a;
  all.insert(all.end(), inputs.b.begin(), inputs.b.end());
  all.insert(all.end(), inputs.c.begin(), inputs.c.end());
  head.net.fit_standardization(all);

  Adam adam(head.net.param_count(), hyper.lr);
  std::vector<std::size_t> order(triplets.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grads;
  std::vector<std::size_t> batch;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(end));
      triplet_batch(head, inputs, batch, &grads);
      adam.step(head.net.params, grads);
    }
    head.train_loss_history.push_back(triplet_loss(head, inputs, nullptr));
  }
  return head;
}

ClusterAssignment assign_clusters(const IntegratedHead& head, const TaggerModel& model,
                                  const std::vector<TaggedSentence>& candidates) {
  if (candidates.empty()) throw Error(ErrorCode::InvalidConfig, "no candidates to assign");
  ClusterAssignment out{head.K(), {}};
  out.assignment.reserve(candidates.size());
  for (const auto& c : candidates)
    out.assignment.push_back(argmax(head.net.forward(head_input(model, c, head.source))));
  return out;
}

std::vector<std::size_t> pick_representatives(const ClusterAssignment& assign,
                                              std::span<const double> uncertainty,
                                              std::size_t per_cluster) {
  if (per_cluster == 0) throw Error(ErrorCode::InvalidConfig, "per_cluster must be >= 1");
  if (uncertainty.size() != assign.assignment.size())
    throw Error(ErrorCode::LengthMismatch, "one uncertainty value per candidate is required");
  std::vector<std::vector<std::size_t>> members(assign.K);
  for (std::size_t i = 0; i < assign.assignment.size(); ++i) members.at(assign.assignment[i]).push_back(i);
  std::vector<std::size_t> picks;
  for (auto& m : members) {
    std::stable_sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) {
      if (uncertainty[a] != uncertainty[b]) return uncertainty[a] > uncertainty[b];
      return a < b;
    });
    for (std::size_t i = 0; i < std::min(per_cluster, m.size()); ++i) picks.push_back(m[i]);
  }
  return picks;
}

std::string cluster_assignment_csv(const ClusterAssignment& assign,
                                   const std::vector<std::size_t>& candidate_indices,
                                   const std::vector<std::size_t>& picked_positions) {
  std::vector<bool> picked(assign.assignment.size(), false);
  for (std::size_t p : picked_positions) picked.at(p) = true;
  std::string out = "candidate_index,cluster_id,picked\n";
  for (std::size_t i = 0; i < assign.assignment.size(); ++i)
    out += std::to_string(candidate_indices.at(i)) + ',' + std::to_string(assign.assignment[i]) + ',' +
           (picked[i] ? "1" : "0") + '\n';
  return out;
}

std::string serialize_integrated(const IntegratedHead& head) {
  std::ostringstream out;
  out << "a2l-integrated 1\nsource " << to_string(head.source) << '\n';
  out << "lambdas " << format_double(head.lambda1) << ' ' << format_double(head.lambda2) << ' '
      << format_double(head.lambda3) << '\n';
  out << serialize_feedforward(head.net);
  out << "history " << head.train_loss_history.size();
  for (double v : head.train_loss_history) out << ' ' << format_double(v);
  out << '\n';
  return out.str();
}

IntegratedHead deserialize_integrated(std::string_view text) {
  std::istringstream header{std::string(text)};
  std::string magic, key, source, l1, l2, l3;
  int version = 0;
  if (!(header >> magic >> version >> key >> source) || magic != "a2l-integrated" || version != 1 ||
      key != "source")
    throw Error(ErrorCode::ParseError, "not an a2l-integrated v1 checkpoint");
  IntegratedHead head;
  if (source == "model_encoder") head.source = EncoderSource::ModelEncoder;
  else if (source == "raw_embedding") head.source = EncoderSource::RawEmbedding;
  else throw Error(ErrorCode::ParseError, "checkpoint: unknown source " + source);
  if (!(header >> key >> l1 >> l2 >> l3) || key != "lambdas")
    throw Error(ErrorCode::ParseError, "checkpoint: lambdas");
  head.lambda1 = parse_double(l1);
  head.lambda2 = parse_double(l2);
  head.lambda3 = parse_double(l3);
  std::string_view rest = text.substr(static_cast<std::size_t>(header.tellg()));
  head.net = parse_feedforward(rest);
  std::istringstream tail{std::string(rest)};
  std::size_t n = 0;
  if (!(tail >> key >> n) || key != "history") throw Error(ErrorCode::ParseError, "checkpoint: history");
  std::string tok;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(tail >> tok)) throw Error(ErrorCode::ParseError, "checkpoint: short history");
    head.train_loss_history.push_back(parse_double(tok));
  }
  return head;
}

}  // namespace a2l
