#include "a2l/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "a2l/optim.hpp"

namespace a2l {

std::string_view to_string(EncoderSource source) {
  return source == EncoderSource::ModelEncoder ? "model_encoder" : "raw_embedding";
}

Vector head_input(const TaggerModel& model, const TaggedSentence& sentence, EncoderSource source) {
  if (source == EncoderSource::ModelEncoder) return encode_sentence(model, sentence);
  return model.embed->mean_features(sentence.tokens);
}

PairInputs siamese_inputs(const TaggerModel& model, const std::vector<SimilarityPair>& pairs,
                          EncoderSource source) {
  PairInputs in;
  in.a.reserve(pairs.size());
  in.b.reserve(pairs.size());
  for (const auto& p : pairs) {
    in.a.push_back(head_input(model, p.sent_a, source));
    in.b.push_back(head_input(model, p.sent_b, source));
    in.targets.push_back(p.target);
  }
  return in;
}

double similarity_from_outputs(std::span<const double> o_a, std::span<const double> o_b) {
  return std::exp(-distance2(o_a, o_b));
}

namespace {

// Loss over the pairs listed in `batch`; gradient is of the batch mean.
double batch_loss(const FeedForward& net, const PairInputs& inputs,
                  const std::vector<std::size_t>& batch, std::vector<double>* grads) {
  if (grads) grads->assign(net.param_count(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  FeedForward::Cache ca, cb;
  Vector g(net.out);
  for (std::size_t idx : batch) {
    const Vector oa = net.forward(inputs.a[idx], grads ? &ca : nullptr);
    const Vector ob = net.forward(inputs.b[idx], grads ? &cb : nullptr);
    const double r = distance2(oa, ob);
    const double s = std::exp(-r);
    const double err = s - inputs.targets[idx];
    loss += err * err * scale;
    if (!grads || r < 1e-15) continue;
    const double coeff = 2.0 * err * scale * (-s) / r;
    for (std::size_t k = 0; k < net.out; ++k) g[k] = coeff * (oa[k] - ob[k]);
    net.backward(ca, g, *grads);
    for (double& v : g) v = -v;
    net.backward(cb, g, *grads);
  }
  return loss;
}

}  // namespace

double siamese_loss(const FeedForward& net, const PairInputs& inputs, std::vector<double>* grads) {
  std::vector<std::size_t> all(inputs.targets.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  if (all.empty()) return 0.0;
  return batch_loss(net, inputs, all, grads);
}

SiameseHead train_siamese_head(const TaggerModel& model, const std::vector<SimilarityPair>& pairs,
                               const SiameseHyper& hyper, std::uint64_t seed, EncoderSource source) {
  if (pairs.empty()) throw Error(ErrorCode::InvalidConfig, "Siamese training needs pairs");
  if (hyper.hidden == 0 || hyper.batch_size == 0 || hyper.epochs < 1 || !(hyper.lr > 0.0))
    throw Error(ErrorCode::InvalidConfig, "invalid Siamese hyper-parameters");

  const PairInputs inputs = siamese_inputs(model, pairs, source);
  Rng rng(derive_seed(seed, 0x51a));

  SiameseHead head;
  head.source = source;
  head.net = FeedForward(model.dim(), hyper.hidden, hyper.hidden, 0.1, rng);
  std::vector<Vector> all_inputs = inputs.a;
  all_inputs.insert(all_inputs.end(), inputs.b.begin(), inputs.b.end());
  head.net.fit_standardization(all_inputs);

  Adam adam(head.net.param_count(), hyper.lr);
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> grads;
  std::vector<std::size_t> batch;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(end));
      batch_loss(head.net, inputs, batch, &grads);
      adam.step(head.net.params, grads);
    }
    head.train_loss_history.push_back(siamese_loss(head.net, inputs, nullptr));
  }
  return head;
}

double similarity_score(const SiameseHead& head, const TaggerModel& model,
                        const TaggedSentence& a, const TaggedSentence& b) {
  return similarity_from_outputs(head.output(head_input(model, a, head.source)),
                                 head.output(head_input(model, b, head.source)));
}

double cosine01(std::span<const double> a, std::span<const double> b) {
  const double na = norm2(a), nb = norm2(b);
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  const double c = std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
  return (c + 1.0) / 2.0;
}

double cosine_score(const TaggerModel& model, const TaggedSentence& a, const TaggedSentence& b) {
  return cosine01(encode_sentence(model, a), encode_sentence(model, b));
}

Vector SiameseScorer::embed(const TaggedSentence& sentence) const {
  count_call();
  return head_->output(head_input(*model_, sentence, head_->source));
}

Vector CosineScorer::embed(const TaggedSentence& sentence) const {
  count_call();
  return encode_sentence(*model_, sentence);
}

Vector FrozenCosineScorer::embed(const TaggedSentence& sentence) const {
  count_call();
  return table_->mean_features(sentence.tokens);
}

SimilarityMatrix build_similarity_matrix(const PairScorer& scorer,
                                         const std::vector<TaggedSentence>& candidates) {
  const std::size_t n = candidates.size();
  if (n < 2) throw Error(ErrorCode::InvalidConfig, "similarity matrix needs at least 2 candidates");
  std::vector<Vector> outputs;
  outputs.reserve(n);
  for (const auto& c : candidates) outputs.push_back(scorer.embed(c));

  SimilarityMatrix m{n, Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    m.values(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = std::clamp(scorer.compare(outputs[i], outputs[j]), kMinSimilarity, 1.0);
      m.values(i, j) = s;
      m.values(j, i) = s;
    }
  }
  return m;
}

std::string similarity_matrix_csv(const SimilarityMatrix& matrix) {
  std::string out;
  for (std::size_t i = 0; i < matrix.n; ++i) {
    for (std::size_t j = 0; j < matrix.n; ++j) {
      if (j) out += ',';
      out += format_double(matrix.values(i, j));
    }
    out += '\n';
  }
  return out;
}

std::string serialize_siamese(const SiameseHead& head) {
  std::ostringstream out;
  out << "a2l-siamese 1\nsource " << to_string(head.source) << '\n';
  out << serialize_feedforward(head.net);
  out << "history " << head.train_loss_history.size();
  for (double v : head.train_loss_history) out << ' ' << format_double(v);
  out << '\n';
  return out.str();
}

SiameseHead deserialize_siamese(std::string_view text) {
  std::istringstream header{std::string(text)};
  std::string magic, key, source;
  int version = 0;
  if (!(header >> magic >> version >> key >> source) || magic != "a2l-siamese" || version != 1 ||
      key != "source")
    throw Error(ErrorCode::ParseError, "not an a2l-siamese v1 checkpoint");
  SiameseHead head;
  if (source == "model_encoder") head.source = EncoderSource::ModelEncoder;
  else if (source == "raw_embedding") head.source = EncoderSource::RawEmbedding;
  else throw Error(ErrorCode::ParseError, "checkpoint: unknown source " + source);

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
