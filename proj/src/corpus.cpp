#include "a2l/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace a2l {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

}  // namespace

std::size_t Corpus::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

std::optional<LabelId> Corpus::label_id(std::string_view name) const {
  for (std::size_t i = 0; i < label_names.size(); ++i)
    if (label_names[i] == name) return static_cast<LabelId>(i);
  return std::nullopt;
}

void Corpus::validate() const {
  for (std::size_t i = 0; i < label_names.size(); ++i)
    for (std::size_t j = i + 1; j < label_names.size(); ++j)
      if (label_names[i] == label_names[j])
        throw Error(ErrorCode::InvalidConfig, "duplicate label name " + label_names[i]);
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto& sent = sentences[s];
    if (sent.tokens.empty() || sent.tokens.size() != sent.labels.size())
      throw Error(ErrorCode::InvalidConfig, "sentence " + std::to_string(s) + " is malformed");
    for (LabelId l : sent.labels)
      if (l >= label_names.size())
        throw Error(ErrorCode::InvalidConfig,
                    "sentence " + std::to_string(s) + " has label out of range");
  }
}

Corpus subset(const Corpus& corpus, const std::vector<std::size_t>& indices) {
  Corpus out;
  out.label_names = corpus.label_names;
  out.sentences.reserve(indices.size());
  for (std::size_t i : indices) out.sentences.push_back(corpus.sentences.at(i));
  return out;
}

Corpus parse_conll(std::string_view text, std::size_t token_col, std::size_t label_col) {
  Corpus corpus;
  std::unordered_map<std::string, LabelId> label_index;
  TaggedSentence current;
  const std::size_t needed = std::max(token_col, label_col) + 1;

  auto flush = [&] {
    if (!current.tokens.empty()) corpus.sentences.push_back(std::move(current));
    current = TaggedSentence{};
  };

  const auto lines = split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string_view line = lines[n];
    if (is_blank(line)) {
      flush();
      continue;
    }
    const auto cols = split_ws(line);
    if (cols.front().starts_with("-DOCSTART-")) continue;
    if (cols.size() < needed)
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(n + 1) + " has " +
                                                std::to_string(cols.size()) + " columns, need " +
                                                std::to_string(needed));
    std::string label(cols[label_col]);
    auto [it, inserted] =
        label_index.try_emplace(label, static_cast<LabelId>(corpus.label_names.size()));
    if (inserted) corpus.label_names.push_back(label);
    current.tokens.emplace_back(cols[token_col]);
    current.labels.push_back(it->second);
  }
  flush();
  if (corpus.sentences.empty()) throw Error(ErrorCode::EmptyCorpus, "no sentences in input");
  return corpus;
}

std::string serialize_conll(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      out += s.tokens[i];
      out += ' ';
      out += corpus.label_names.at(s.labels[i]);
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

Corpus read_conll_file(const std::filesystem::path& path, std::size_t token_col,
                       std::size_t label_col) {
  return parse_conll(read_text_file(path), token_col, label_col);
}

Corpus generate_synthetic_corpus(const SyntheticCorpusConfig& config) {
  if (config.n_templates == 0 || config.copies_per_template == 0 || config.vocab_size == 0 ||
      config.n_labels == 0)
    throw Error(ErrorCode::InvalidConfig, "synthetic corpus counts must be >= 1");
  if (config.max_len < 2) throw Error(ErrorCode::InvalidConfig, "max_len must be >= 2");
  if (config.vocab_size < config.n_labels)
    throw Error(ErrorCode::InvalidConfig, "vocab_size must be >= n_labels");

  const std::size_t n_labels = config.n_labels;
  Rng rng(derive_seed(config.seed, 0x5e17));

  Corpus corpus;
  corpus.label_names.push_back("O");
  for (std::size_t l = 1; l < n_labels; ++l) corpus.label_names.push_back("L" + std::to_string(l));

  // Token i belongs to label class i % n_labels; within a class, earlier
  // tokens are more frequent.
  std::vector<std::vector<std::size_t>> class_tokens(n_labels);
  for (std::size_t t = 0; t < config.vocab_size; ++t) class_tokens[t % n_labels].push_back(t);
  std::vector<std::vector<double>> class_cdf(n_labels);
  for (std::size_t c = 0; c < n_labels; ++c) {
    double total = 0.0;
    for (std::size_t r = 0; r < class_tokens[c].size(); ++r) {
      total += 1.0 / static_cast<double>(r + 1);
      class_cdf[c].push_back(total);
    }
    for (double& v : class_cdf[c]) v /= total;
  }
  auto sample_cdf = [&](const std::vector<double>& cdf) {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
  };
  auto token_name = [](std::size_t t) { return "w" + std::to_string(t); };

  // Label chain; "O" is weighted up as the background label.
  std::vector<std::vector<double>> chain_cdf(n_labels + 1);
  for (std::size_t from = 0; from <= n_labels; ++from) {
    double total = 0.0;
    for (std::size_t to = 0; to < n_labels; ++to) {
      double w = 0.2 + rng.uniform();
      if (to == 0) w *= 2.0;
      total += w;
      chain_cdf[from].push_back(total);
    }
    for (double& v : chain_cdf[from]) v /= total;
  }

  for (std::size_t t = 0; t < config.n_templates; ++t) {
    const std::size_t len = 2 + rng.below(config.max_len - 1);
    std::vector<LabelId> labels(len);
    std::vector<std::size_t> base(len);
    std::size_t prev = n_labels;  // start state
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t l = sample_cdf(chain_cdf[prev]);
      labels[i] = static_cast<LabelId>(l);
      base[i] = class_tokens[l][sample_cdf(class_cdf[l])];
      prev = l;
    }

    std::vector<std::size_t> positions(len);
    for (std::size_t i = 0; i < len; ++i) positions[i] = i;
    rng.shuffle(positions);
    const std::size_t n_slots = std::min(config.synonym_slots, len - 1);
    positions.resize(n_slots);
    std::sort(positions.begin(), positions.end());

    for (std::size_t c = 0; c < config.copies_per_template; ++c) {
      std::vector<std::size_t> toks = base;
      if (c > 0) {
        for (std::size_t pos : positions) {
          const auto& pool = class_tokens[labels[pos]];
          if (pool.size() < 2) continue;
          std::size_t pick = pool[rng.below(pool.size())];
          while (pick == base[pos]) pick = pool[rng.below(pool.size())];
          toks[pos] = pick;
        }
      }
      TaggedSentence s;
      s.labels = labels;
      s.template_id = static_cast<int>(t);
      for (std::size_t tok : toks) s.tokens.push_back(token_name(tok));
      corpus.sentences.push_back(std::move(s));
    }
  }
  return corpus;
}

double multiset_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::map<std::string_view, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& t : a) ++counts[t].first;
  for (const auto& t : b) ++counts[t].second;
  std::size_t inter = 0, uni = 0;
  for (const auto& [tok, c] : counts) {
    inter += std::min(c.first, c.second);
    uni += std::max(c.first, c.second);
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<SimilarityPair> generate_pair_dataset(const Corpus& corpus, std::size_t n_pairs,
                                                  std::uint64_t seed) {
  if (corpus.empty()) throw Error(ErrorCode::InvalidConfig, "pair dataset needs a corpus");
  if (n_pairs == 0) throw Error(ErrorCode::InvalidConfig, "n_pairs must be >= 1");

  std::map<int, std::vector<std::size_t>> by_template;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (const auto& tid = corpus.sentences[i].template_id) by_template[*tid].push_back(i);
  std::vector<const std::vector<std::size_t>*> groups;
  for (const auto& [tid, members] : by_template)
    if (members.size() >= 2) groups.push_back(&members);

  Rng rng(derive_seed(seed, 0x9a125));
  std::vector<SimilarityPair> pairs;
  pairs.reserve(n_pairs);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    std::size_t ia, ib;
    if (p % 2 == 0 && !groups.empty()) {
      const auto& members = *groups[rng.below(groups.size())];
      ia = members[rng.below(members.size())];
      ib = members[rng.below(members.size())];
      while (ib == ia) ib = members[rng.below(members.size())];
    } else {
      ia = rng.below(corpus.size());
      ib = rng.below(corpus.size());
    }
    SimilarityPair pair{corpus.sentences[ia], corpus.sentences[ib], 0.0};
    pair.target = multiset_jaccard(pair.sent_a.tokens, pair.sent_b.tokens);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<SimilarityPair> parse_pair_tsv(std::string_view text, bool sick_scale) {
  std::vector<SimilarityPair> pairs;
  const auto lines = split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string_view line = lines[n];
    if (is_blank(line)) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3)
      throw Error(ErrorCode::MalformedLine,
                  "pair line " + std::to_string(n + 1) + " needs 3 tab-separated fields");
    SimilarityPair pair;
    for (int side = 0; side < 2; ++side) {
      TaggedSentence& s = side == 0 ? pair.sent_a : pair.sent_b;
      for (auto tok : split_ws(fields[side])) s.tokens.emplace_back(tok);
      if (s.tokens.empty())
        throw Error(ErrorCode::MalformedLine, "pair line " + std::to_string(n + 1) +
                                                  " has an empty sentence");
      s.labels.assign(s.tokens.size(), 0);
    }
    double target = parse_double(split_ws(fields[2]).empty() ? "" : split_ws(fields[2]).front());
    if (sick_scale) target = (target - 1.0) / 4.0;
    if (!(target >= 0.0 && target <= 1.0))
      throw Error(ErrorCode::MalformedLine,
                  "pair line " + std::to_string(n + 1) + " target outside [0, 1]");
    pair.target = target;
    pairs.push_back(std::move(pair));
  }
  if (pairs.empty()) throw Error(ErrorCode::EmptyCorpus, "no pairs in input");
  return pairs;
}

std::string serialize_pair_tsv(const std::vector<SimilarityPair>& pairs) {
  auto join = [](const std::vector<std::string>& toks) {
    std::string s;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (i) s += ' ';
      s += toks[i];
    }
    return s;
  };
  std::string out;
  for (const auto& p : pairs)
    out += join(p.sent_a.tokens) + '\t' + join(p.sent_b.tokens) + '\t' +
           format_double(p.target) + '\n';
  return out;
}

std::vector<SimilarityPair> read_pair_file(const std::filesystem::path& path, bool sick_scale) {
  return parse_pair_tsv(read_text_file(path), sick_scale);
}

Split split_initial(std::size_t corpus_size, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw Error(ErrorCode::InvalidConfig, "initial fraction must be in (0, 1)");
  if (corpus_size == 0) throw Error(ErrorCode::InvalidConfig, "cannot split an empty corpus");
  const auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(corpus_size)));
  const std::size_t n_labeled = std::min(corpus_size, std::max<std::size_t>(1, want));

  std::vector<std::size_t> order(corpus_size);
  for (std::size_t i = 0; i < corpus_size; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x5b117));
  rng.shuffle(order);

  Split split;
  split.labeled.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_labeled));
  split.unlabeled.assign(order.begin() + static_cast<std::ptrdiff_t>(n_labeled), order.end());
  std::sort(split.labeled.begin(), split.labeled.end());
  std::sort(split.unlabeled.begin(), split.unlabeled.end());
  return split;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace a2l
