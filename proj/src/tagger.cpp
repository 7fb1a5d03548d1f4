#include "a2l/tagger.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>

#include "a2l/optim.hpp"

namespace a2l {

EmbeddingTable::EmbeddingTable(std::size_t dim, std::uint64_t seed)
    : dim_(dim), seed_(seed), values_(kBuckets * dim) {
  if (dim == 0) throw Error(ErrorCode::InvalidConfig, "embedding dim must be >= 1");
  Rng rng(derive_seed(seed, 0xe3b));
  const double scale = 1.0 / static_cast<double>(dim);
  for (double& v : values_) v = (rng.uniform() - 0.5) * scale;
}

std::size_t EmbeddingTable::bucket(std::string_view token) {
  return static_cast<std::size_t>(splitmix64(fnv1a(token)) % kBuckets);
}

Vector EmbeddingTable::features(std::string_view token) const {
  const auto e = lookup(token);
  Vector x(e.begin(), e.end());
  for (double& v : x) v *= static_cast<double>(dim_);
  return x;
}

Vector EmbeddingTable::mean_features(const std::vector<std::string>& tokens) const {
  Vector mean(dim_, 0.0);
  for (const auto& t : tokens) {
    const auto x = features(t);
    for (std::size_t i = 0; i < dim_; ++i) mean[i] += x[i];
  }
  if (!tokens.empty())
    for (double& v : mean) v /= static_cast<double>(tokens.size());
  return mean;
}

std::shared_ptr<const EmbeddingTable> shared_embedding_table(std::size_t dim, std::uint64_t seed) {
  static std::mutex mutex;
  static std::map<std::pair<std::size_t, std::uint64_t>, std::shared_ptr<const EmbeddingTable>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{dim, seed}];
  if (!slot) slot = std::make_shared<const EmbeddingTable>(dim, seed);
  return slot;
}

std::vector<EmissionExample> collect_emission_examples(const Corpus& corpus,
                                                       std::size_t label_count) {
  std::map<std::size_t, std::vector<double>> counts;
  for (const auto& s : corpus.sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto& c = counts[EmbeddingTable::bucket(s.tokens[i])];
      if (c.empty()) c.assign(label_count, 0.0);
      c.at(s.labels[i]) += 1.0;
    }
  }
  std::vector<EmissionExample> out;
  out.reserve(counts.size());
  for (auto& [bucket, c] : counts) out.push_back({bucket, std::move(c)});
  return out;
}

namespace {

double emission_loss_impl(const Matrix& features, const Matrix& W, const Vector& b,
                          const std::vector<EmissionExample>& data, double l2, Matrix* grad_W,
                          Vector* grad_b) {
  const std::size_t labels = W.rows();
  const std::size_t dim = W.cols();
  if (grad_W) *grad_W = Matrix(labels, dim);
  if (grad_b) grad_b->assign(labels, 0.0);

  double loss = 0.0;
  double total = 0.0;
  Vector logits(labels);
  for (std::size_t e = 0; e < data.size(); ++e) {
    const auto x = features.row(e);
    for (std::size_t c = 0; c < labels; ++c) logits[c] = dot(W.row(c), x) + b[c];
    const Vector logp = log_softmax(logits);
    double n = 0.0;
    for (std::size_t c = 0; c < labels; ++c) {
      n += data[e].label_counts[c];
      loss -= data[e].label_counts[c] * logp[c];
    }
    total += n;
    if (grad_W || grad_b) {
      for (std::size_t c = 0; c < labels; ++c) {
        const double g = n * std::exp(logp[c]) - data[e].label_counts[c];
        if (grad_b) (*grad_b)[c] += g;
        if (grad_W) {
          auto gw = grad_W->row(c);
          for (std::size_t j = 0; j < dim; ++j) gw[j] += g * x[j];
        }
      }
    }
  }
  if (total <= 0.0) total = 1.0;
  loss /= total;
  double sq = 0.0;
  for (double w : W.data()) sq += w * w;
  loss += 0.5 * l2 * sq;
  if (grad_b)
    for (double& g : *grad_b) g /= total;
  if (grad_W) {
    for (std::size_t i = 0; i < W.data().size(); ++i)
      grad_W->data()[i] = grad_W->data()[i] / total + l2 * W.data()[i];
  }
  return loss;
}

Matrix feature_matrix(const EmbeddingTable& embed, const std::vector<EmissionExample>& data) {
  Matrix features(data.size(), embed.dim());
  const double scale = static_cast<double>(embed.dim());
  for (std::size_t e = 0; e < data.size(); ++e) {
    const auto row = embed.row(data[e].bucket);
    for (std::size_t j = 0; j < embed.dim(); ++j) features(e, j) = row[j] * scale;
  }
  return features;
}

}  // namespace

double emission_loss(const EmbeddingTable& embed, const Matrix& W, const Vector& b,
                     const std::vector<EmissionExample>& data, double l2, Matrix* grad_W,
                     Vector* grad_b) {
  return emission_loss_impl(feature_matrix(embed, data), W, b, data, l2, grad_W, grad_b);
}

Matrix transition_log_probs(const Corpus& corpus, std::size_t label_count) {
  Matrix counts(label_count, label_count, 1.0);
  for (const auto& s : corpus.sentences)
    for (std::size_t i = 1; i < s.size(); ++i) counts(s.labels[i - 1], s.labels[i]) += 1.0;
  Matrix log_T(label_count, label_count);
  for (std::size_t a = 0; a < label_count; ++a) {
    double total = 0.0;
    for (std::size_t b = 0; b < label_count; ++b) total += counts(a, b);
    for (std::size_t b = 0; b < label_count; ++b) log_T(a, b) = std::log(counts(a, b) / total);
  }
  return log_T;
}

TaggerModel train_tagger(const Corpus& corpus, const TaggerHyper& hyper) {
  if (!(hyper.lr > 0.0)) throw Error(ErrorCode::InvalidConfig, "tagger lr must be > 0");
  if (hyper.epochs < 1) throw Error(ErrorCode::InvalidConfig, "tagger epochs must be >= 1");
  if (hyper.l2 < 0.0) throw Error(ErrorCode::InvalidConfig, "tagger l2 must be >= 0");
  if (!(hyper.dropout_rate >= 0.0 && hyper.dropout_rate < 1.0))
    throw Error(ErrorCode::InvalidConfig, "dropout rate must be in [0, 1)");
  if (corpus.empty()) throw Error(ErrorCode::InvalidConfig, "cannot train on an empty subset");
  if (corpus.label_names.empty()) throw Error(ErrorCode::InvalidConfig, "corpus has no labels");

  TaggerModel model;
  model.embed = shared_embedding_table(hyper.dim, hyper.embedding_seed);
  model.label_count = corpus.label_names.size();
  model.dropout_rate = hyper.dropout_rate;
  model.log_T = transition_log_probs(corpus, model.label_count);

  const std::size_t labels = model.label_count;
  const std::size_t dim = hyper.dim;
  Rng rng(derive_seed(hyper.seed, 0x7a66));
  model.W_emit = Matrix(labels, dim);
  for (double& w : model.W_emit.data()) w = 0.01 * rng.normal();
  model.b_emit.assign(labels, 0.0);

  const auto data = collect_emission_examples(corpus, labels);
  const Matrix features = feature_matrix(*model.embed, data);

  // Parameters packed as [W row-major, b].
  std::vector<double> params(labels * dim + labels);
  std::vector<double> grads(params.size());
  Adam adam(params.size(), hyper.lr);
  std::copy(model.W_emit.data().begin(), model.W_emit.data().end(), params.begin());
  Matrix gW;
  Vector gb;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    emission_loss_impl(features, model.W_emit, model.b_emit, data, hyper.l2, &gW, &gb);
    std::copy(gW.data().begin(), gW.data().end(), grads.begin());
    std::copy(gb.begin(), gb.end(), grads.begin() + static_cast<std::ptrdiff_t>(labels * dim));
    adam.step(params, grads);
    std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(labels * dim),
              model.W_emit.data().begin());
    std::copy(params.begin() + static_cast<std::ptrdiff_t>(labels * dim), params.end(),
              model.b_emit.begin());
  }
  return model;
}

Vector apply_dropout(std::span<const double> features, double rate, Rng& rng) {
  Vector out(features.begin(), features.end());
  if (rate <= 0.0) return out;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : out) v = rng.bernoulli(rate) ? 0.0 : v * keep_scale;
  return out;
}

Matrix emission_log_probs(const TaggerModel& model, const std::vector<std::string>& tokens,
                          std::optional<std::uint64_t> dropout_seed) {
  const std::size_t labels = model.label_count;
  Matrix out(tokens.size(), labels);
  std::optional<Rng> rng;
  if (dropout_seed) rng.emplace(*dropout_seed);
  Vector logits(labels);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    Vector x = model.embed->features(tokens[t]);
    if (rng) x = apply_dropout(x, model.dropout_rate, *rng);
    for (std::size_t c = 0; c < labels; ++c) logits[c] = dot(model.W_emit.row(c), x) + model.b_emit[c];
    const Vector logp = log_softmax(logits);
    std::copy(logp.begin(), logp.end(), out.row(t).begin());
  }
  return out;
}

double path_score(const Matrix& log_emissions, const Matrix& log_T,
                  const std::vector<LabelId>& labels) {
  double s = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    s += log_emissions(t, labels[t]);
    if (t > 0) s += log_T(labels[t - 1], labels[t]);
  }
  return s;
}

std::vector<ScoredSequence> kbest_viterbi(const Matrix& log_emissions, const Matrix& log_T,
                                          std::size_t k) {
  const std::size_t n = log_emissions.rows();
  const std::size_t labels = log_emissions.cols();
  if (n == 0 || labels == 0 || k == 0) return {};

  struct Entry {
    double score;
    std::uint32_t prev_label;
    std::uint32_t prev_rank;
  };
  auto better = [](const Entry& a, const Entry& b) {
    return std::tie(b.score, a.prev_label, a.prev_rank) < std::tie(a.score, b.prev_label, b.prev_rank);
  };

  // lattice[t][label] holds up to k partial paths ending in `label`, best first.
  std::vector<std::vector<std::vector<Entry>>> lattice(n, std::vector<std::vector<Entry>>(labels));
  for (std::size_t y = 0; y < labels; ++y) lattice[0][y].push_back({log_emissions(0, y), 0, 0});

  std::vector<Entry> candidates;
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t y = 0; y < labels; ++y) {
      candidates.clear();
      for (std::size_t p = 0; p < labels; ++p) {
        const auto& prev = lattice[t - 1][p];
        for (std::size_t r = 0; r < prev.size(); ++r)
          candidates.push_back({prev[r].score + log_T(p, y) + log_emissions(t, y),
                                static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(r)});
      }
      const std::size_t keep = std::min(k, candidates.size());
      std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                        candidates.end(), better);
      lattice[t][y].assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep));
    }
  }

  // Final entries reuse Entry with prev_label = last label.
  std::vector<Entry> finals;
  for (std::size_t y = 0; y < labels; ++y)
    for (std::size_t r = 0; r < lattice[n - 1][y].size(); ++r)
      finals.push_back({lattice[n - 1][y][r].score, static_cast<std::uint32_t>(y),
                        static_cast<std::uint32_t>(r)});
  const std::size_t keep = std::min(k, finals.size());
  std::partial_sort(finals.begin(), finals.begin() + static_cast<std::ptrdiff_t>(keep), finals.end(),
                    better);

  std::vector<ScoredSequence> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    ScoredSequence seq;
    seq.score = finals[i].score;
    seq.labels.resize(n);
    std::uint32_t y = finals[i].prev_label;
    std::uint32_t r = finals[i].prev_rank;
    for (std::size_t t = n; t-- > 0;) {
      seq.labels[t] = y;
      const Entry& e = lattice[t][y][r];
      y = e.prev_label;
      r = e.prev_rank;
    }
    out.push_back(std::move(seq));
  }
  return out;
}

Vector transform_token(const TaggerModel& model, std::span<const double> features) {
  const std::size_t labels = model.label_count;
  Vector logits(labels);
  for (std::size_t c = 0; c < labels; ++c)
    logits[c] = dot(model.W_emit.row(c), features) + model.b_emit[c];
  const Vector p = softmax(logits);
  Vector z(features.begin(), features.end());
  for (std::size_t c = 0; c < labels; ++c) {
    const auto w = model.W_emit.row(c);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += p[c] * w[j];
  }
  return z;
}

PredictionRecord predict(const TaggerModel& model, const TaggedSentence& sentence, std::size_t k,
                         std::optional<std::uint64_t> dropout_seed) {
  if (k < 2) throw Error(ErrorCode::InvalidConfig, "predict needs k >= 2");
  if (sentence.tokens.empty()) throw Error(ErrorCode::InvalidConfig, "cannot predict an empty sentence");

  PredictionRecord rec;
  const Matrix log_em = emission_log_probs(model, sentence.tokens, dropout_seed);
  const std::size_t n = sentence.size();
  rec.src_len = n;
  rec.pred_len = n;
  rec.token_dists = Matrix(n, model.label_count);
  for (std::size_t i = 0; i < log_em.data().size(); ++i)
    rec.token_dists.data()[i] = std::exp(log_em.data()[i]);
  rec.kbest = kbest_viterbi(log_em, model.log_T, k);
  rec.seq_logprob = 0.0;
  for (std::size_t t = 0; t < n; ++t) rec.seq_logprob += log_em(t, rec.kbest.front().labels[t]);

  rec.token_encodings = Matrix(n, model.dim());
  rec.encoding.assign(model.dim(), 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const Vector z = transform_token(model, model.embed->features(sentence.tokens[t]));
    std::copy(z.begin(), z.end(), rec.token_encodings.row(t).begin());
    for (std::size_t j = 0; j < z.size(); ++j) rec.encoding[j] += z[j];
  }
  for (double& v : rec.encoding) v /= static_cast<double>(n);
  return rec;
}

std::vector<LabelId> decode(const TaggerModel& model, const TaggedSentence& sentence) {
  if (sentence.tokens.empty()) return {};
  return kbest_viterbi(emission_log_probs(model, sentence.tokens), model.log_T, 1).front().labels;
}

Vector encode_sentence(const TaggerModel& model, const TaggedSentence& sentence) {
  if (sentence.tokens.empty()) throw Error(ErrorCode::InvalidConfig, "cannot encode an empty sentence");
  Vector mean(model.dim(), 0.0);
  for (const auto& tok : sentence.tokens) {
    const Vector z = transform_token(model, model.embed->features(tok));
    for (std::size_t j = 0; j < z.size(); ++j) mean[j] += z[j];
  }
  for (double& v : mean) v /= static_cast<double>(sentence.size());
  return mean;
}

namespace {

void write_values(std::ostringstream& out, const char* name, const std::vector<double>& values) {
  out << name << ' ' << values.size();
  for (double v : values) out << ' ' << format_double(v);
  out << '\n';
}

std::vector<double> read_values(std::istringstream& in, const char* name) {
  std::string key;
  std::size_t n = 0;
  if (!(in >> key >> n) || key != name)
    throw Error(ErrorCode::ParseError, std::string("checkpoint: expected ") + name);
  std::vector<double> values(n);
  std::string tok;
  for (auto& v : values) {
    if (!(in >> tok)) throw Error(ErrorCode::ParseError, std::string("checkpoint: short ") + name);
    v = parse_double(tok);
  }
  return values;
}

}  // namespace

std::string serialize_tagger(const TaggerModel& model) {
  std::ostringstream out;
  out << "a2l-tagger 1\n";
  out << "dim " << model.dim() << '\n';
  out << "embedding_seed " << model.embed->seed() << '\n';
  out << "labels " << model.label_count << '\n';
  out << "dropout_rate " << format_double(model.dropout_rate) << '\n';
  write_values(out, "W_emit", model.W_emit.data());
  write_values(out, "b_emit", model.b_emit);
  write_values(out, "log_T", model.log_T.data());
  return out.str();
}

TaggerModel deserialize_tagger(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string magic, key, tok;
  int version = 0;
  if (!(in >> magic >> version) || magic != "a2l-tagger" || version != 1)
    throw Error(ErrorCode::ParseError, "not an a2l-tagger v1 checkpoint");
  std::size_t dim = 0, labels = 0;
  std::uint64_t seed = 0;
  if (!(in >> key >> dim) || key != "dim") throw Error(ErrorCode::ParseError, "checkpoint: dim");
  if (!(in >> key >> seed) || key != "embedding_seed")
    throw Error(ErrorCode::ParseError, "checkpoint: embedding_seed");
  if (!(in >> key >> labels) || key != "labels") throw Error(ErrorCode::ParseError, "checkpoint: labels");
  if (!(in >> key >> tok) || key != "dropout_rate")
    throw Error(ErrorCode::ParseError, "checkpoint: dropout_rate");

  TaggerModel model;
  model.embed = shared_embedding_table(dim, seed);
  model.label_count = labels;
  model.dropout_rate = parse_double(tok);
  model.W_emit = Matrix(labels, dim);
  model.log_T = Matrix(labels, labels);
  model.W_emit.data() = read_values(in, "W_emit");
  model.b_emit = read_values(in, "b_emit");
  model.log_T.data() = read_values(in, "log_T");
  if (model.W_emit.data().size() != labels * dim || model.b_emit.size() != labels ||
      model.log_T.data().size() != labels * labels)
    throw Error(ErrorCode::ParseError, "checkpoint: parameter sizes do not match header");
  return model;
}

}  // namespace a2l
