#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "a2l/clustering.hpp"
#include "a2l/corpus.hpp"
#include "a2l/similarity.hpp"
#include "a2l/strategies.hpp"
#include "a2l/tagger.hpp"

namespace a2l {

enum class DedupMode { MaSiamese, IntModel, Cosine, InferSentLike, IsoSiamese, None, Random };

std::string_view to_string(DedupMode mode);
DedupMode parse_dedup_mode(std::string_view name);

/// True for modes that train a similarity or clustering head.
bool uses_head(DedupMode mode);

struct LoopConfig {
  StrategyConfig strategy;
  DedupMode dedup = DedupMode::MaSiamese;
  double initial_fraction = 0.02;
  // Candidate-selection size per iteration, as a fraction of the pool.
  double per_iter_fraction = 0.02;
  std::size_t iterations = 10;
  std::size_t clusters = 20;
  std::size_t per_cluster = 2;
  std::size_t retrain_period = 10;
  std::uint64_t seed = 0;
  TaggerHyper tagger;
  SiameseHyper siamese;
  IntegratedHyper integrated;
  std::size_t n_triplets = 2000;
  std::optional<std::string> outside_label = std::string("O");
  bool record_wall_time = true;

  void validate() const;
};

// Simulated annotator: reveals gold labels and counts the cost.
class Oracle {
 public:
  explicit Oracle(const Corpus& pool) : pool_(&pool), labeled_(pool.size(), false) {}

  /// Throws AlreadyLabeled if any index was revealed before (or repeats).
  std::vector<TaggedSentence> annotate(std::span<const std::size_t> indices);

  bool is_labeled(std::size_t index) const { return labeled_.at(index); }
  std::size_t cost_tokens() const { return cost_tokens_; }
  std::size_t cost_sentences() const { return cost_sentences_; }

 private:
  const Corpus* pool_;
  std::vector<bool> labeled_;
  std::size_t cost_tokens_ = 0;
  std::size_t cost_sentences_ = 0;
};

std::vector<TaggedSentence> oracle_annotate(Oracle& oracle, std::span<const std::size_t> indices);

/// Micro-averaged token F1; tokens labeled `outside` are not positives.
double token_f1(const std::vector<std::vector<LabelId>>& predictions,
                const std::vector<std::vector<LabelId>>& gold,
                std::optional<LabelId> outside = std::nullopt);

double evaluate_f1(const TaggerModel& model, const Corpus& test, std::optional<LabelId> outside);

/// Smallest logged x whose metric reaches `target`.
std::optional<double> data_fraction_to_target(const std::vector<std::pair<double, double>>& curve,
                                              double target);

struct IterationRecord {
  std::size_t iter = 0;
  double labeled_fraction = 0.0;
  std::size_t n_labeled = 0;
  std::vector<std::size_t> selected;
  std::vector<std::size_t> kept;
  std::vector<std::size_t> cluster_sizes;
  double test_f1 = 0.0;
  std::size_t cost_tokens = 0;
  std::size_t cost_sentences = 0;
  bool head_retrained = false;
  double wall_ms = 0.0;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct RunLog {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<IterationRecord> records;  // records[0] is the initial split
  bool budget_exhausted = false;
  std::shared_ptr<const TaggerModel> final_model;
};

/// Tagger hyper-parameters the loop trains with (seeded from cfg.seed).
TaggerHyper loop_tagger_hyper(const LoopConfig& cfg);
/// The loop's initial labeled/unlabeled split.
Split loop_initial_split(const LoopConfig& cfg, std::size_t pool_size);
/// The head a dedup mode trains on a fresh model (null members for other modes).
struct DedupHeads {
  std::shared_ptr<const SiameseHead> siamese;
  std::shared_ptr<const IntegratedHead> integrated;
};
DedupHeads train_dedup_heads(const LoopConfig& cfg, const TaggerModel& model,
                             const std::vector<SimilarityPair>& aux_pairs);
// Clusters `candidates` the way the loop does for cfg.dedup.
ClusterAssignment dedup_cluster(const LoopConfig& cfg, const DedupHeads& heads,
                                std::shared_ptr<const TaggerModel> model,
                                const std::vector<TaggedSentence>& candidates, std::uint64_t seed);

// Iterative select -> deduplicate -> annotate -> retrain. `aux_pairs` is the
// auxiliary similarity dataset the heads are trained on.
RunLog run_active2_learning(const LoopConfig& cfg, const Corpus& pool, const Corpus& test,
                            const std::vector<SimilarityPair>& aux_pairs);

// Line-delimited run log: one JSON object per iteration.
std::string runlog_to_jsonl(const RunLog& log);
RunLog runlog_from_jsonl(std::string_view text, std::string method, std::uint64_t seed);

/// CSV: iter,labeled_fraction,n_selected,n_kept,test_f1,cost_tokens,wall_ms
std::string runlog_csv(const RunLog& log);

}  // namespace a2l
