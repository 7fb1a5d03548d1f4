#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "a2l/common.hpp"

namespace a2l {

/// A token sequence with its gold label sequence; the unit of annotation.
struct TaggedSentence {
  std::vector<std::string> tokens;
  std::vector<LabelId> labels;
  /// Set for synthetic sentences: copies of one template share the id.
  std::optional<int> template_id;

  std::size_t size() const { return tokens.size(); }
  friend bool operator==(const TaggedSentence&, const TaggedSentence&) = default;
};

struct Corpus {
  std::vector<TaggedSentence> sentences;
  std::vector<std::string> label_names;

  std::size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
  std::size_t token_count() const;
  /// Index of a label name, or nullopt.
  std::optional<LabelId> label_id(std::string_view name) const;
  /// Throws InvalidConfig if the corpus invariants do not hold.
  void validate() const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Sub-corpus with the sentences at `indices`, label set unchanged.
Corpus subset(const Corpus& corpus, const std::vector<std::size_t>& indices);

// CoNLL column format: whitespace-separated columns, blank line between
// sentences, "-DOCSTART-" lines ignored. Labels are numbered in order of
// first appearance.
Corpus parse_conll(std::string_view text, std::size_t token_col = 0, std::size_t label_col = 1);
/// Two-column "token label" rendering that parse_conll reads back.
std::string serialize_conll(const Corpus& corpus);
Corpus read_conll_file(const std::filesystem::path& path, std::size_t token_col = 0,
                       std::size_t label_col = 1);

struct SyntheticCorpusConfig {
  std::size_t n_templates = 50;
  std::size_t copies_per_template = 5;
  std::size_t vocab_size = 400;
  std::size_t n_labels = 5;
  std::size_t max_len = 10;
  std::uint64_t seed = 0;
  /// Upper bound on positions that vary between copies of a template.
  std::size_t synonym_slots = 2;
};

// Planted-duplicate corpus. Every template is a label sequence drawn from a
// seeded Markov chain with tokens drawn from the label's own vocabulary
// (Zipf-weighted). Copies keep the labels and length and swap the tokens at
// up to `synonym_slots` positions for other tokens of the same label class.
// Label 0 is "O". Sentences are stored template-major.
Corpus generate_synthetic_corpus(const SyntheticCorpusConfig& config);

/// Pair of sentences with a similarity target in [0, 1].
struct SimilarityPair {
  TaggedSentence sent_a;
  TaggedSentence sent_b;
  double target = 0.0;
};

/// |A ∩ B| / |A ∪ B| over token multisets. Two empty sentences give 1.
double multiset_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Samples pairs with Jaccard targets. When template ids exist, half of the
// pairs are drawn within a template and half across; otherwise uniformly.
std::vector<SimilarityPair> generate_pair_dataset(const Corpus& corpus, std::size_t n_pairs,
                                                  std::uint64_t seed);

// Pair TSV: "sentence_a TAB sentence_b TAB target", tokens space-separated.
// Pair sentences carry no labels, so every label is set to 0. When
// `sick_scale` is set, targets are read on the 1..5 scale and mapped to
// [0, 1] via (s - 1) / 4.
std::vector<SimilarityPair> parse_pair_tsv(std::string_view text, bool sick_scale = false);
std::string serialize_pair_tsv(const std::vector<SimilarityPair>& pairs);
std::vector<SimilarityPair> read_pair_file(const std::filesystem::path& path,
                                           bool sick_scale = false);

struct Split {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
};

/// Random labeled/unlabeled partition of [0, corpus_size); both sides sorted.
/// |labeled| = max(1, round(fraction * corpus_size)).
Split split_initial(std::size_t corpus_size, double fraction, std::uint64_t seed);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace a2l
