#include "a2l/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

namespace a2l {

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Margin: return "margin";
    case StrategyKind::Entropy: return "entropy";
    case StrategyKind::Bald: return "bald";
    case StrategyKind::LeastConfidence: return "lc";
    case StrategyKind::Coverage: return "cs";
    case StrategyKind::AttentionDistraction: return "ads";
  }
  return "?";
}

StrategyKind parse_strategy_kind(std::string_view name) {
  for (auto k : {StrategyKind::Margin, StrategyKind::Entropy, StrategyKind::Bald,
                 StrategyKind::LeastConfidence, StrategyKind::Coverage,
                 StrategyKind::AttentionDistraction})
    if (to_string(k) == name) return k;
  throw Error(ErrorCode::ValidationError, "unknown strategy '" + std::string(name) + "'");
}

bool higher_is_uncertain(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Entropy:
    case StrategyKind::Bald:
    case StrategyKind::AttentionDistraction:
      return true;
    case StrategyKind::Margin:
    case StrategyKind::LeastConfidence:
    case StrategyKind::Coverage:
      return false;
  }
  return true;
}

double StrategyConfig::default_threshold(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Margin: return 15.0;
    case StrategyKind::Entropy: return 40.0;
    case StrategyKind::Bald: return 0.2;
    default: return 0.0;
  }
}

void StrategyConfig::validate() const {
  if (mode == SelectionMode::TopFraction && !(fraction > 0.0 && fraction <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "top fraction must be in (0, 1]");
  if (kind == StrategyKind::Bald && bald_passes < 2)
    throw Error(ErrorCode::InvalidConfig, "BALD needs at least 2 passes");
  if (!(bald_dropout >= 0.0 && bald_dropout < 1.0))
    throw Error(ErrorCode::InvalidConfig, "BALD dropout must be in [0, 1)");
}

double margin_score(const PredictionRecord& rec) {
  if (rec.kbest.size() < 2) throw Error(ErrorCode::KBestTooShort, "margin needs two sequences");
  return rec.kbest[0].score - rec.kbest[1].score;
}

double entropy_score(const PredictionRecord& rec) {
  const std::size_t n = rec.token_dists.rows();
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto row = rec.token_dists.row(j);
    const double s = *std::max_element(row.begin(), row.end());
    if (s > 0.0) sum += s * std::log(s);
  }
  return -sum / static_cast<double>(n);
}

double bald_from_outputs(const std::vector<std::vector<LabelId>>& outputs) {
  if (outputs.empty()) return 0.0;
  std::map<std::vector<LabelId>, std::size_t> counts;
  std::size_t best = 0;
  for (const auto& y : outputs) best = std::max(best, ++counts[y]);
  return 1.0 - static_cast<double>(best) / static_cast<double>(outputs.size());
}

double bald_score(const TaggerModel& model, const TaggedSentence& sentence,
                  const StrategyConfig& cfg, std::uint64_t seed) {
  if (cfg.bald_passes < 2) throw Error(ErrorCode::InvalidConfig, "BALD needs at least 2 passes");
  std::vector<std::vector<LabelId>> outputs;
  outputs.reserve(cfg.bald_passes);
  for (std::size_t pass = 0; pass < cfg.bald_passes; ++pass) {
    const Matrix log_em = emission_log_probs(model, sentence.tokens, derive_seed(seed, pass));
    outputs.push_back(kbest_viterbi(log_em, model.log_T, 1).front().labels);
  }
  return bald_from_outputs(outputs);
}

double lc_score(const PredictionRecord& rec) {
  if (rec.pred_len == 0) throw Error(ErrorCode::InvalidConfig, "LC needs a non-empty prediction");
  return rec.seq_logprob / static_cast<double>(rec.pred_len);
}

double coverage_score(const PredictionRecord& rec) {
  if (!rec.attention) throw Error(ErrorCode::MissingAttention, "coverage needs attention");
  const Matrix& a = *rec.attention;
  const std::size_t n = a.cols();
  if (n == 0) throw Error(ErrorCode::MissingAttention, "attention has no source positions");
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) col += a(i, j);
    sum += std::log(std::max(std::min(col, 1.0), kCoverageFloor));
  }
  return sum / static_cast<double>(n);
}

double attention_kurtosis(std::span<const double> row) {
  const double n = static_cast<double>(row.size());
  const double mean = 1.0 / n;
  double fourth = 0.0, total = 0.0;
  for (double a : row) {
    fourth += std::pow(a - mean, 4);
    total += a;
  }
  const double inner = (total - mean) / n;
  const double denom = inner * inner;
  if (row.size() < 2 || denom == 0.0)
    throw Error(ErrorCode::DegenerateRow, "kurtosis denominator is zero");
  return (fourth / n) / denom;
}

double ads_score(const PredictionRecord& rec) {
  if (!rec.attention) throw Error(ErrorCode::MissingAttention, "ADS needs attention");
  const Matrix& a = *rec.attention;
  if (a.rows() == 0) throw Error(ErrorCode::MissingAttention, "attention has no target rows");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) sum -= attention_kurtosis(a.row(i));
  return sum / static_cast<double>(a.rows());
}

double score_sentence(const TaggerModel& model, const TaggedSentence& sentence,
                      const StrategyConfig& cfg, std::uint64_t seed) {
  switch (cfg.kind) {
    case StrategyKind::Bald:
      return bald_score(model, sentence, cfg, seed);
    case StrategyKind::Margin:
      return margin_score(predict(model, sentence, 2));
    case StrategyKind::Entropy:
      return entropy_score(predict(model, sentence, 2));
    case StrategyKind::LeastConfidence:
      return lc_score(predict(model, sentence, 2));
    case StrategyKind::Coverage:
    case StrategyKind::AttentionDistraction:
      throw Error(ErrorCode::MissingAttention,
                  std::string(to_string(cfg.kind)) + " needs attention records, not tagger output");
  }
  return 0.0;
}

double score_record(const PredictionRecord& rec, StrategyKind kind) {
  switch (kind) {
    case StrategyKind::LeastConfidence: return lc_score(rec);
    case StrategyKind::Coverage: return coverage_score(rec);
    case StrategyKind::AttentionDistraction: return ads_score(rec);
    case StrategyKind::Margin: return margin_score(rec);
    case StrategyKind::Entropy: return entropy_score(rec);
    case StrategyKind::Bald:
      throw Error(ErrorCode::InvalidConfig, "BALD needs the model, not a record");
  }
  return 0.0;
}

std::vector<std::size_t> select_candidates(const std::vector<ScoredCandidate>& scored,
                                           const StrategyConfig& cfg) {
  std::vector<const ScoredCandidate*> order;
  order.reserve(scored.size());
  for (const auto& c : scored) {
    if (cfg.mode == SelectionMode::Threshold) {
      const bool pass = c.higher_is_uncertain ? c.score >= cfg.threshold : c.score <= cfg.threshold;
      if (!pass) continue;
    }
    order.push_back(&c);
  }
  std::stable_sort(order.begin(), order.end(), [](const ScoredCandidate* a, const ScoredCandidate* b) {
    if (a->uncertainty() != b->uncertainty()) return a->uncertainty() > b->uncertainty();
    return a->index < b->index;
  });
  if (cfg.mode == SelectionMode::TopFraction) {
    const double want = std::ceil(cfg.fraction * static_cast<double>(scored.size()) - 1e-9);
    order.resize(std::min(order.size(), static_cast<std::size_t>(std::max(want, 0.0))));
  }
  std::vector<std::size_t> out;
  out.reserve(order.size());
  for (const auto* c : order) out.push_back(c->index);
  return out;
}

PredictionRecord parse_attention_record(std::string_view json_line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("attention record: ") + e.what());
  }
  try {
    PredictionRecord rec;
    rec.src_len = j.at("src_len").get<std::size_t>();
    rec.pred_len = j.at("tgt_len").get<std::size_t>();
    rec.seq_logprob = j.at("seq_logprob").get<double>();
    const auto values = j.at("attention").get<std::vector<double>>();
    if (values.size() != rec.src_len * rec.pred_len)
      throw Error(ErrorCode::ParseError, "attention record: expected " +
                                             std::to_string(rec.src_len * rec.pred_len) +
                                             " attention values, got " + std::to_string(values.size()));
    Matrix a(rec.pred_len, rec.src_len);
    a.data() = values;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double s = 0.0;
      for (double v : a.row(i)) {
        if (!(v >= 0.0)) throw Error(ErrorCode::ParseError, "attention record: negative or NaN weight");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-6)
        throw Error(ErrorCode::ParseError, "attention record: row " + std::to_string(i) + " does not sum to 1");
    }
    rec.attention = std::move(a);
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("attention record: ") + e.what());
  }
}

std::vector<PredictionRecord> parse_attention_records(std::string_view text) {
  std::vector<PredictionRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_attention_record(line));
  }
  return out;
}

std::string serialize_attention_record(const PredictionRecord& rec) {
  if (!rec.attention) throw Error(ErrorCode::MissingAttention, "record has no attention");
  nlohmann::json j;
  j["src_len"] = rec.src_len;
  j["tgt_len"] = rec.pred_len;
  j["attention"] = rec.attention->data();
  j["seq_logprob"] = rec.seq_logprob;
  return j.dump();
}

std::vector<PredictionRecord> synthesize_attention_records(std::size_t count, std::size_t max_len,
                                                           std::uint64_t seed) {
  if (max_len < 2) throw Error(ErrorCode::InvalidConfig, "max_len must be >= 2");
  Rng rng(derive_seed(seed, 0xa77e));
  std::vector<PredictionRecord> out;
  out.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    PredictionRecord rec;
    rec.src_len = 2 + rng.below(max_len - 1);
    rec.pred_len = 1 + rng.below(max_len);
    // Sharpness controls how peaked each row is; low sharpness means diffuse attention.
    const double sharpness = rng.uniform(0.1, 6.0);
    Matrix a(rec.pred_len, rec.src_len);
    Vector logits(rec.src_len);
    for (std::size_t i = 0; i < rec.pred_len; ++i) {
      const std::size_t focus = rng.below(rec.src_len);
      for (std::size_t j = 0; j < rec.src_len; ++j)
        logits[j] = 0.5 * rng.normal() + (j == focus ? sharpness : 0.0);
      const Vector p = softmax(logits);
      std::copy(p.begin(), p.end(), a.row(i).begin());
    }
    rec.attention = std::move(a);
    rec.seq_logprob = -static_cast<double>(rec.pred_len) * rng.uniform(0.05, 3.0) / (0.5 + sharpness / 6.0);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace a2l
