#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "a2l/corpus.hpp"
#include "a2l/loop.hpp"

namespace a2l {

enum class TaskKind { Tagging, TranslationScoring };

std::string_view to_string(TaskKind task);

struct FileData {
  std::filesystem::path train;
  std::filesystem::path test;
  std::size_t token_col = 0;
  std::size_t label_col = 1;
};

struct SyntheticData {
  SyntheticCorpusConfig corpus;
  // Extra copies per template held out as the test corpus.
  std::size_t test_copies = 2;
};

struct TranslationData {
  std::optional<std::filesystem::path> records;  // attention records, JSON lines
  std::size_t synthetic_records = 200;
  std::size_t max_len = 12;
  std::uint64_t seed = 0;
};

// Spec file: JSON with comments allowed. See README for the keys.
struct ExperimentSpec {
  TaskKind task = TaskKind::Tagging;
  std::optional<FileData> data;
  std::optional<SyntheticData> synthetic;
  TranslationData translation;
  std::optional<std::filesystem::path> pairs;
  bool pairs_sick_scale = false;
  std::size_t aux_pairs = 1000;
  LoopConfig loop;
  // loop.dedup is the primary method; these run alongside it.
  std::vector<DedupMode> baselines{DedupMode::None, DedupMode::Random};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::filesystem::path output_dir;
  double target_ratio = 0.99;

  std::vector<DedupMode> methods() const;
  void validate() const;
};

ExperimentSpec parse_spec(std::string_view text);
ExperimentSpec load_spec(const std::filesystem::path& path);

struct PreparedData {
  Corpus pool;
  Corpus test;
  std::vector<SimilarityPair> aux_pairs;
};

PreparedData prepare_data(const ExperimentSpec& spec);

/// Test F1 of one tagger trained on the whole pool.
double full_data_f1(const ExperimentSpec& spec, const PreparedData& data);

struct MethodSummary {
  std::string method;
  std::size_t n_seeds = 0;
  double full_data_f1 = 0.0;
  double target_f1 = 0.0;
  std::size_t reached_seeds = 0;
  std::optional<double> fraction_to_target;  // mean over seeds that reached it
  std::optional<double> tokens_to_target;
  double final_labeled_fraction = 0.0;
  double final_f1 = 0.0;
  std::optional<double> reduction_vs_none;
};

struct ExperimentResult {
  std::vector<RunLog> runs;  // method-major, then seed
  std::vector<MethodSummary> summary;
};

/// Mean and population stddev of labeled_fraction, test_f1 and cost_tokens per iteration.
std::string curve_csv(const std::vector<const RunLog*>& runs);

std::vector<MethodSummary> summarize(const std::vector<RunLog>& runs, const std::vector<std::string>& methods,
                                     double full_f1, double target_ratio);
std::string summary_csv(const std::vector<MethodSummary>& summary);

// Runs every method for every seed and writes run_<method>_seed<k>.{jsonl,csv},
// curve_<method>.csv, summary.csv and meta.json under the output directory.
ExperimentResult run_experiment(const ExperimentSpec& spec, bool quiet = true);

/// Rebuilds curve and summary CSVs from the run logs in `dir`.
std::vector<MethodSummary> report(const std::filesystem::path& dir);

/// One-shot scoring of the unlabeled pool as CSV: index,score,uncertainty,selected.
std::string score_pool(const ExperimentSpec& spec, std::uint64_t seed);

/// One-shot dedup of the selected rows of a scores.csv. Returns cluster CSV text.
std::string cluster_candidates(const ExperimentSpec& spec, std::uint64_t seed, std::string_view scores_csv);

}  // namespace a2l
