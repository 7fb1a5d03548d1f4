#include "a2l/loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

namespace a2l {

namespace {

constexpr std::uint64_t kTaggerStream = 0x7a;
constexpr std::uint64_t kSplitStream = 0x5b;
constexpr std::uint64_t kHeadStream = 0x4e;
constexpr std::uint64_t kTripletStream = 0x3c;
constexpr std::uint64_t kIterStream = 0x1000;

}  // namespace

std::string_view to_string(DedupMode mode) {
  switch (mode) {
    case DedupMode::MaSiamese: return "ma_siamese";
    case DedupMode::IntModel: return "int_model";
    case DedupMode::Cosine: return "cosine";
    case DedupMode::InferSentLike: return "infersent_like";
    case DedupMode::IsoSiamese: return "iso_siamese";
    case DedupMode::None: return "none";
    case DedupMode::Random: return "random";
  }
  return "?";
}

DedupMode parse_dedup_mode(std::string_view name) {
  for (auto m : {DedupMode::MaSiamese, DedupMode::IntModel, DedupMode::Cosine, DedupMode::InferSentLike,
                 DedupMode::IsoSiamese, DedupMode::None, DedupMode::Random})
    if (to_string(m) == name) return m;
  throw Error(ErrorCode::ValidationError, "unknown dedup mode '" + std::string(name) + "'");
}

bool uses_head(DedupMode mode) {
  return mode == DedupMode::MaSiamese || mode == DedupMode::IsoSiamese || mode == DedupMode::IntModel;
}

void LoopConfig::validate() const {
  strategy.validate();
  if (!(initial_fraction > 0.0 && initial_fraction < 1.0))
    throw Error(ErrorCode::InvalidConfig, "initial_fraction must be in (0, 1)");
  if (!(per_iter_fraction > 0.0 && per_iter_fraction < 1.0))
    throw Error(ErrorCode::InvalidConfig, "per_iter_fraction must be in (0, 1)");
  if (iterations < 1) throw Error(ErrorCode::InvalidConfig, "iterations must be >= 1");
  if (clusters < 2) throw Error(ErrorCode::InvalidConfig, "clusters must be >= 2");
  if (per_cluster < 1) throw Error(ErrorCode::InvalidConfig, "per_cluster must be >= 1");
  if (retrain_period < 1) throw Error(ErrorCode::InvalidConfig, "retrain_period must be >= 1");
  if (strategy.kind == StrategyKind::Coverage || strategy.kind == StrategyKind::AttentionDistraction)
    throw Error(ErrorCode::InvalidConfig, "coverage and ADS need attention records; the tagging loop cannot use them");
}

std::vector<TaggedSentence> Oracle::annotate(std::span<const std::size_t> indices) {
  std::set<std::size_t> seen;
  for (std::size_t i : indices) {
    if (i >= labeled_.size()) throw Error(ErrorCode::InvalidConfig, "index out of range: " + std::to_string(i));
    if (labeled_[i] || !seen.insert(i).second)
      throw Error(ErrorCode::AlreadyLabeled, "sentence " + std::to_string(i) + " is already labeled");
  }
  std::vector<TaggedSentence> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    labeled_[i] = true;
    cost_tokens_ += pool_->sentences[i].size();
    ++cost_sentences_;
    out.push_back(pool_->sentences[i]);
  }
  return out;
}

std::vector<TaggedSentence> oracle_annotate(Oracle& oracle, std::span<const std::size_t> indices) {
  return oracle.annotate(indices);
}

double token_f1(const std::vector<std::vector<LabelId>>& predictions,
                const std::vector<std::vector<LabelId>>& gold, std::optional<LabelId> outside) {
  if (predictions.size() != gold.size())
    throw Error(ErrorCode::LengthMismatch, "prediction and gold sentence counts differ");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (predictions[s].size() != gold[s].size())
      throw Error(ErrorCode::LengthMismatch, "sentence " + std::to_string(s) + " lengths differ");
    for (std::size_t t = 0; t < gold[s].size(); ++t) {
      const LabelId p = predictions[s][t], g = gold[s][t];
      const bool p_pos = !outside || p != *outside;
      const bool g_pos = !outside || g != *outside;
      if (p == g) {
        if (g_pos) ++tp;
      } else {
        if (p_pos) ++fp;
        if (g_pos) ++fn;
      }
    }
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * tp / (2.0 * tp + fp + fn);
}

double evaluate_f1(const TaggerModel& model, const Corpus& test, std::optional<LabelId> outside) {
  std::vector<std::vector<LabelId>> pred, gold;
  pred.reserve(test.size());
  gold.reserve(test.size());
  for (const auto& s : test.sentences) {
    pred.push_back(decode(model, s));
    gold.push_back(s.labels);
  }
  return token_f1(pred, gold, outside);
}

std::optional<double> data_fraction_to_target(const std::vector<std::pair<double, double>>& curve,
                                              double target) {
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (!(curve[i].first > curve[i - 1].first))
      throw Error(ErrorCode::InvalidConfig, "curve fractions must be strictly increasing");
  for (const auto& [fraction, metric] : curve)
    if (metric >= target) return fraction;
  return std::nullopt;
}

namespace {

Corpus labeled_corpus(const Corpus& pool, const std::vector<bool>& labeled) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < labeled.size(); ++i)
    if (labeled[i]) idx.push_back(i);
  return subset(pool, idx);
}

}  // namespace

TaggerHyper loop_tagger_hyper(const LoopConfig& cfg) {
  TaggerHyper hyper = cfg.tagger;
  hyper.seed = derive_seed(cfg.seed, kTaggerStream);
  hyper.dropout_rate = cfg.strategy.bald_dropout;
  return hyper;
}

Split loop_initial_split(const LoopConfig& cfg, std::size_t pool_size) {
  return split_initial(pool_size, cfg.initial_fraction, derive_seed(cfg.seed, kSplitStream));
}

DedupHeads train_dedup_heads(const LoopConfig& cfg, const TaggerModel& model,
                             const std::vector<SimilarityPair>& aux_pairs) {
  DedupHeads heads;
  const std::uint64_t seed = derive_seed(cfg.seed, kHeadStream);
  switch (cfg.dedup) {
    case DedupMode::MaSiamese:
      heads.siamese = std::make_shared<const SiameseHead>(
          train_siamese_head(model, aux_pairs, cfg.siamese, seed, EncoderSource::ModelEncoder));
      break;
    case DedupMode::IsoSiamese:
      heads.siamese = std::make_shared<const SiameseHead>(
          train_siamese_head(model, aux_pairs, cfg.siamese, seed, EncoderSource::RawEmbedding));
      break;
    case DedupMode::IntModel: {
      IntegratedHyper hyper = cfg.integrated;
      hyper.clusters = cfg.clusters;
      const auto triplets = triplets_from_pairs(aux_pairs, cfg.n_triplets, derive_seed(cfg.seed, kTripletStream));
      heads.integrated = std::make_shared<const IntegratedHead>(
          train_integrated_head(model, triplets, hyper, seed, EncoderSource::ModelEncoder));
      break;
    }
    default:
      break;
  }
  return heads;
}

ClusterAssignment dedup_cluster(const LoopConfig& cfg, const DedupHeads& heads,
                                std::shared_ptr<const TaggerModel> model,
                                const std::vector<TaggedSentence>& candidates, std::uint64_t seed) {
  const std::size_t k = std::min(cfg.clusters, candidates.size());
  switch (cfg.dedup) {
    case DedupMode::MaSiamese:
    case DedupMode::IsoSiamese:
      return spectral_cluster(build_similarity_matrix(SiameseScorer(heads.siamese, model), candidates), k, seed);
    case DedupMode::Cosine:
      return spectral_cluster(build_similarity_matrix(CosineScorer(model), candidates), k, seed);
    case DedupMode::InferSentLike:
      return spectral_cluster(build_similarity_matrix(FrozenCosineScorer(model->embed), candidates), k, seed);
    case DedupMode::IntModel:
      return assign_clusters(*heads.integrated, *model, candidates);
    default:
      throw Error(ErrorCode::InvalidConfig, "dedup mode '" + std::string(to_string(cfg.dedup)) + "' does not cluster");
  }
}

RunLog run_active2_learning(const LoopConfig& cfg, const Corpus& pool, const Corpus& test,
                            const std::vector<SimilarityPair>& aux_pairs) {
  cfg.validate();
  if (pool.empty() || test.empty()) throw Error(ErrorCode::InvalidConfig, "pool and test corpora must be non-empty");
  if (uses_head(cfg.dedup) && aux_pairs.empty())
    throw Error(ErrorCode::InvalidConfig, "dedup mode needs an auxiliary similarity dataset");

  using Clock = std::chrono::steady_clock;
  auto elapsed_ms = [&](Clock::time_point start) {
    if (!cfg.record_wall_time) return 0.0;
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  };

  std::optional<LabelId> outside;
  if (cfg.outside_label) outside = pool.label_id(*cfg.outside_label);

  const TaggerHyper tagger_hyper = loop_tagger_hyper(cfg);

  RunLog log;
  log.method = std::string(to_string(cfg.dedup));
  log.seed = cfg.seed;
  const double pool_size = static_cast<double>(pool.size());

  auto start = Clock::now();
  Oracle oracle(pool);
  std::vector<bool> labeled(pool.size(), false);
  const Split split = loop_initial_split(cfg, pool.size());
  oracle.annotate(split.labeled);
  for (std::size_t i : split.labeled) labeled[i] = true;
  std::size_t n_labeled = split.labeled.size();

  auto model = std::make_shared<const TaggerModel>(train_tagger(labeled_corpus(pool, labeled), tagger_hyper));

  DedupHeads heads = train_dedup_heads(cfg, *model, aux_pairs);

  IterationRecord first;
  first.iter = 0;
  first.n_labeled = n_labeled;
  first.labeled_fraction = static_cast<double>(n_labeled) / pool_size;
  first.selected = split.labeled;
  first.kept = split.labeled;
  first.test_f1 = evaluate_f1(*model, test, outside);
  first.cost_tokens = oracle.cost_tokens();
  first.cost_sentences = oracle.cost_sentences();
  first.head_retrained = uses_head(cfg.dedup);
  first.wall_ms = elapsed_ms(start);
  log.records.push_back(std::move(first));

  const auto budget_target = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(cfg.per_iter_fraction * pool_size)));

  for (std::size_t iter = 1; iter <= cfg.iterations; ++iter) {
    start = Clock::now();
    std::vector<std::size_t> unlabeled;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (!labeled[i]) unlabeled.push_back(i);
    if (unlabeled.empty()) {
      log.budget_exhausted = true;
      break;
    }
    const std::uint64_t iter_seed = derive_seed(cfg.seed, kIterStream + iter);
    const std::size_t budget = std::min(budget_target, unlabeled.size());

    IterationRecord rec;
    rec.iter = iter;
    std::vector<double> uncertainty_of(pool.size(), 0.0);

    if (cfg.dedup == DedupMode::Random) {
      Rng rng(iter_seed);
      std::vector<std::size_t> order = unlabeled;
      rng.shuffle(order);
      order.resize(budget);
      rec.selected = order;
    } else {
      std::vector<ScoredCandidate> scored;
      scored.reserve(unlabeled.size());
      const bool higher = higher_is_uncertain(cfg.strategy.kind);
      for (std::size_t i : unlabeled) {
        const double s = score_sentence(*model, pool.sentences[i], cfg.strategy, derive_seed(iter_seed, i));
        scored.push_back({i, s, higher});
        uncertainty_of[i] = scored.back().uncertainty();
      }
      StrategyConfig selection = cfg.strategy;
      if (selection.mode == SelectionMode::TopFraction)
        selection.fraction = static_cast<double>(budget) / static_cast<double>(unlabeled.size());
      rec.selected = select_candidates(scored, selection);
    }

    // Deduplicate the selection.
    if (cfg.dedup == DedupMode::None || cfg.dedup == DedupMode::Random || rec.selected.size() < 2) {
      rec.kept = rec.selected;
    } else {
      std::vector<TaggedSentence> candidates;
      std::vector<double> uncertainty;
      for (std::size_t i : rec.selected) {
        candidates.push_back(pool.sentences[i]);
        uncertainty.push_back(uncertainty_of[i]);
      }
      const ClusterAssignment assign = dedup_cluster(cfg, heads, model, candidates, derive_seed(iter_seed, 0xc1));
      rec.cluster_sizes = assign.sizes();
      for (std::size_t pos : pick_representatives(assign, uncertainty, cfg.per_cluster))
        rec.kept.push_back(rec.selected[pos]);
    }

    oracle.annotate(rec.kept);
    for (std::size_t i : rec.kept) labeled[i] = true;
    n_labeled += rec.kept.size();

    model = std::make_shared<const TaggerModel>(train_tagger(labeled_corpus(pool, labeled), tagger_hyper));
    if (uses_head(cfg.dedup) && iter % cfg.retrain_period == 0) {
      heads = train_dedup_heads(cfg, *model, aux_pairs);
      rec.head_retrained = true;
    }

    rec.n_labeled = n_labeled;
    rec.labeled_fraction = static_cast<double>(n_labeled) / pool_size;
    rec.test_f1 = evaluate_f1(*model, test, outside);
    rec.cost_tokens = oracle.cost_tokens();
    rec.cost_sentences = oracle.cost_sentences();
    rec.wall_ms = elapsed_ms(start);
    log.records.push_back(std::move(rec));
  }
  log.final_model = model;
  return log;
}

std::string runlog_to_jsonl(const RunLog& log) {
  std::string out;
  for (const auto& r : log.records) {
    nlohmann::ordered_json j;
    j["iter"] = r.iter;
    j["labeled_fraction"] = r.labeled_fraction;
    j["n_labeled"] = r.n_labeled;
    j["selected_indices"] = r.selected;
    j["dedup_kept_indices"] = r.kept;
    j["cluster_sizes"] = r.cluster_sizes;
    j["test_metric"] = r.test_f1;
    j["cost_tokens"] = r.cost_tokens;
    j["cost_sentences"] = r.cost_sentences;
    j["head_retrained"] = r.head_retrained;
    j["wall_ms"] = r.wall_ms;
    out += j.dump();
    out += '\n';
  }
  return out;
}

RunLog runlog_from_jsonl(std::string_view text, std::string method, std::uint64_t seed) {
  RunLog log;
  log.method = std::move(method);
  log.seed = seed;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      IterationRecord r;
      r.iter = j.at("iter").get<std::size_t>();
      r.labeled_fraction = j.at("labeled_fraction").get<double>();
      r.n_labeled = j.at("n_labeled").get<std::size_t>();
      r.selected = j.at("selected_indices").get<std::vector<std::size_t>>();
      r.kept = j.at("dedup_kept_indices").get<std::vector<std::size_t>>();
      r.cluster_sizes = j.at("cluster_sizes").get<std::vector<std::size_t>>();
      r.test_f1 = j.at("test_metric").get<double>();
      r.cost_tokens = j.at("cost_tokens").get<std::size_t>();
      r.cost_sentences = j.at("cost_sentences").get<std::size_t>();
      r.head_retrained = j.at("head_retrained").get<bool>();
      r.wall_ms = j.at("wall_ms").get<double>();
      log.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, std::string("run log: ") + e.what());
    }
  }
  return log;
}

std::string runlog_csv(const RunLog& log) {
  std::string out = "iter,labeled_fraction,n_selected,n_kept,test_f1,cost_tokens,wall_ms\n";
  for (const auto& r : log.records) {
    out += std::to_string(r.iter) + ',' + format_fixed(r.labeled_fraction) + ',' +
           std::to_string(r.selected.size()) + ',' + std::to_string(r.kept.size()) + ',' +
           format_fixed(r.test_f1) + ',' + std::to_string(r.cost_tokens) + ',' + format_fixed(r.wall_ms, 3) + '\n';
  }
  return out;
}

}  // namespace a2l
