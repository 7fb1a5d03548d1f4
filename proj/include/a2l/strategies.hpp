#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "a2l/tagger.hpp"

namespace a2l {

enum class StrategyKind { Margin, Entropy, Bald, LeastConfidence, Coverage, AttentionDistraction };
enum class SelectionMode { Threshold, TopFraction };

std::string_view to_string(StrategyKind kind);
StrategyKind parse_strategy_kind(std::string_view name);

/// True when larger scores mean more uncertainty for this strategy.
bool higher_is_uncertain(StrategyKind kind);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::Margin;
  SelectionMode mode = SelectionMode::TopFraction;
  double threshold = 15.0;
  double fraction = 0.02;
  std::size_t bald_passes = 51;
  double bald_dropout = 0.5;

  /// Default threshold per strategy kind.
  static double default_threshold(StrategyKind kind);
  void validate() const;
};

struct ScoredCandidate {
  std::size_t index = 0;
  double score = 0.0;
  bool higher_is_uncertain = true;

  /// Score oriented so that larger always means more uncertain.
  double uncertainty() const { return higher_is_uncertain ? score : -score; }
};

// Clamp applied to log arguments in the coverage score.
inline constexpr double kCoverageFloor = 1e-12;

/// s(y_max) - s(y') over the two best sequences. Lower is more uncertain.
double margin_score(const PredictionRecord& rec);

/// -(1/n) sum_j s_j ln s_j with s_j the max-class probability of token j.
double entropy_score(const PredictionRecord& rec);

/// 1 - count(mode)/N over whole label sequences; mode ties go to first seen.
double bald_from_outputs(const std::vector<std::vector<LabelId>>& outputs);

/// N dropout passes with per-pass seeds derived from `seed`.
double bald_score(const TaggerModel& model, const TaggedSentence& sentence,
                  const StrategyConfig& cfg, std::uint64_t seed);

/// (1/n(y)) log P(y|x). Lower is more uncertain.
double lc_score(const PredictionRecord& rec);

/// (1/n(x)) sum_j log(min(sum_i a_ij, 1)). Lower is more uncertain.
double coverage_score(const PredictionRecord& rec);

/// Kurtosis of one attention row as used by the distraction score.
double attention_kurtosis(std::span<const double> row);

/// Mean of -Kurt over target rows. Higher is more uncertain.
double ads_score(const PredictionRecord& rec);

// Strategy score for a tagging prediction. BALD runs its own dropout passes
// and ignores `rec`.
double score_sentence(const TaggerModel& model, const TaggedSentence& sentence,
                      const StrategyConfig& cfg, std::uint64_t seed);

/// Strategy score for an ingested translation record (LC, CS or ADS only).
double score_record(const PredictionRecord& rec, StrategyKind kind);

// Threshold mode keeps candidates passing the strategy's inequality;
// top-fraction mode keeps ceil(fraction * n). Output is ordered by
// decreasing uncertainty, ties by lower index.
std::vector<std::size_t> select_candidates(const std::vector<ScoredCandidate>& scored,
                                           const StrategyConfig& cfg);

// Translation attention records, one JSON object per line:
//   {"src_len": n, "tgt_len": m, "attention": [m*n row-major], "seq_logprob": x}
PredictionRecord parse_attention_record(std::string_view json_line);
std::vector<PredictionRecord> parse_attention_records(std::string_view text);
std::string serialize_attention_record(const PredictionRecord& rec);

// Synthetic attention records with a spread of peaked, diffuse and
// under-covering rows, for exercising the translation scorers.
std::vector<PredictionRecord> synthesize_attention_records(std::size_t count, std::size_t max_len,
                                                           std::uint64_t seed);

}  // namespace a2l
