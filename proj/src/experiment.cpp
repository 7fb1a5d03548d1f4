#include "a2l/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace a2l {

using nlohmann::json;

std::string_view to_string(TaskKind task) {
  return task == TaskKind::Tagging ? "tagging" : "translation_scoring";
}

std::vector<DedupMode> ExperimentSpec::methods() const {
  std::vector<DedupMode> out{loop.dedup};
  for (DedupMode m : baselines)
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  return out;
}

void ExperimentSpec::validate() const {
  if (seeds.empty()) throw Error(ErrorCode::ValidationError, "n_seeds must be >= 1");
  if (!(target_ratio > 0.0 && target_ratio <= 1.0))
    throw Error(ErrorCode::ValidationError, "target_ratio must be in (0, 1]");
  if (task == TaskKind::Tagging) {
    if (data.has_value() == synthetic.has_value())
      throw Error(ErrorCode::ValidationError, "exactly one of 'data' or 'synthetic' is required");
    try {
      loop.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::ValidationError, e.what());
    }
    if (synthetic && synthetic->test_copies < 1)
      throw Error(ErrorCode::ValidationError, "synthetic.test_copies must be >= 1");
  } else {
    const StrategyKind k = loop.strategy.kind;
    if (k != StrategyKind::LeastConfidence && k != StrategyKind::Coverage && k != StrategyKind::AttentionDistraction)
      throw Error(ErrorCode::ValidationError, "translation_scoring needs strategy lc, cs or ads");
    try {
      loop.strategy.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::ValidationError, e.what());
    }
  }
}

namespace {

// Reads one JSON object, remembering which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorCode::ValidationError, "'" + path_ + "' must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  bool get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return false;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::ValidationError, "bad value for '" + name(key) + "'");
    }
    return true;
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), name(key));
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw Error(ErrorCode::ValidationError, "unknown key '" + name(key) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
auto named(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(ErrorCode::ValidationError, "'" + key + "': " + e.what());
  }
}

void read_strategy(Section s, StrategyConfig& cfg) {
  std::string kind, mode;
  if (s.get("kind", kind)) cfg.kind = named(s.name("kind"), [&] { return parse_strategy_kind(kind); });
  cfg.threshold = StrategyConfig::default_threshold(cfg.kind);
  if (s.get("mode", mode)) {
    if (mode == "threshold") cfg.mode = SelectionMode::Threshold;
    else if (mode == "top_fraction") cfg.mode = SelectionMode::TopFraction;
    else throw Error(ErrorCode::ValidationError, "'" + s.name("mode") + "' must be threshold or top_fraction");
  }
  s.get("threshold", cfg.threshold);
  s.get("fraction", cfg.fraction);
  s.get("bald_passes", cfg.bald_passes);
  s.get("bald_dropout", cfg.bald_dropout);
  s.finish();
}

}  // namespace

ExperimentSpec parse_spec(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end(), nullptr, true, true);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("spec: ") + e.what());
  }
  Section top(root, "");
  ExperimentSpec spec;

  std::string task = "tagging";
  top.get("task", task);
  if (task == "tagging") {
    spec.task = TaskKind::Tagging;
  } else if (task == "translation_scoring") {
    spec.task = TaskKind::TranslationScoring;
    spec.loop.clusters = 50;
    spec.loop.retrain_period = 3;
    spec.loop.strategy.kind = StrategyKind::LeastConfidence;
    spec.loop.strategy.threshold = StrategyConfig::default_threshold(StrategyKind::LeastConfidence);
    spec.loop.strategy.fraction = 0.5;
  } else {
    throw Error(ErrorCode::ValidationError, "'task' must be tagging or translation_scoring");
  }

  if (top.has("data")) {
    Section s = top.sub("data");
    FileData d;
    std::string train, test;
    if (!s.get("train", train) || !s.get("test", test))
      throw Error(ErrorCode::ValidationError, "'data' needs 'train' and 'test'");
    d.train = train;
    d.test = test;
    s.get("token_col", d.token_col);
    s.get("label_col", d.label_col);
    s.finish();
    spec.data = d;
  }
  if (top.has("synthetic")) {
    Section s = top.sub("synthetic");
    SyntheticData d;
    s.get("n_templates", d.corpus.n_templates);
    s.get("copies_per_template", d.corpus.copies_per_template);
    s.get("vocab_size", d.corpus.vocab_size);
    s.get("n_labels", d.corpus.n_labels);
    s.get("max_len", d.corpus.max_len);
    s.get("seed", d.corpus.seed);
    s.get("synonym_slots", d.corpus.synonym_slots);
    s.get("test_copies", d.test_copies);
    s.finish();
    spec.synthetic = d;
  }
  if (top.has("pairs")) {
    Section s = top.sub("pairs");
    std::string path;
    if (s.get("path", path)) spec.pairs = path;
    s.get("sick_scale", spec.pairs_sick_scale);
    s.get("count", spec.aux_pairs);
    s.finish();
  }
  if (top.has("translation")) {
    Section s = top.sub("translation");
    std::string path;
    if (s.get("records", path)) spec.translation.records = path;
    s.get("synthetic_records", spec.translation.synthetic_records);
    s.get("max_len", spec.translation.max_len);
    s.get("seed", spec.translation.seed);
    s.finish();
  }
  if (top.has("strategy")) read_strategy(top.sub("strategy"), spec.loop.strategy);

  if (top.has("loop")) {
    Section s = top.sub("loop");
    std::string dedup;
    if (s.get("dedup", dedup)) spec.loop.dedup = named(s.name("dedup"), [&] { return parse_dedup_mode(dedup); });
    s.get("initial_fraction", spec.loop.initial_fraction);
    s.get("per_iter_fraction", spec.loop.per_iter_fraction);
    s.get("iterations", spec.loop.iterations);
    s.get("clusters", spec.loop.clusters);
    s.get("per_cluster", spec.loop.per_cluster);
    s.get("retrain_period", spec.loop.retrain_period);
    s.get("record_wall_time", spec.loop.record_wall_time);
    if (s.has("outside_label")) {
      const json& o = s.raw("outside_label");
      if (o.is_null()) spec.loop.outside_label.reset();
      else if (o.is_string()) spec.loop.outside_label = o.get<std::string>();
      else throw Error(ErrorCode::ValidationError, "'loop.outside_label' must be a string or null");
    }
    s.finish();
  }
  if (top.has("tagger")) {
    Section s = top.sub("tagger");
    s.get("lr", spec.loop.tagger.lr);
    s.get("epochs", spec.loop.tagger.epochs);
    s.get("l2", spec.loop.tagger.l2);
    s.get("dim", spec.loop.tagger.dim);
    s.get("embedding_seed", spec.loop.tagger.embedding_seed);
    s.finish();
  }
  if (top.has("siamese")) {
    Section s = top.sub("siamese");
    s.get("hidden", spec.loop.siamese.hidden);
    s.get("lr", spec.loop.siamese.lr);
    s.get("epochs", spec.loop.siamese.epochs);
    s.get("batch_size", spec.loop.siamese.batch_size);
    s.finish();
  }
  if (top.has("integrated")) {
    Section s = top.sub("integrated");
    s.get("hidden", spec.loop.integrated.hidden);
    s.get("lr", spec.loop.integrated.lr);
    s.get("epochs", spec.loop.integrated.epochs);
    s.get("batch_size", spec.loop.integrated.batch_size);
    s.get("lambda1", spec.loop.integrated.lambda1);
    s.get("lambda2", spec.loop.integrated.lambda2);
    s.get("lambda3", spec.loop.integrated.lambda3);
    s.get("triplets", spec.loop.n_triplets);
    s.finish();
  }
  if (top.has("baselines")) {
    std::vector<std::string> names;
    top.get("baselines", names);
    spec.baselines.clear();
    for (const auto& n : names) spec.baselines.push_back(named("baselines", [&] { return parse_dedup_mode(n); }));
  }

  std::uint64_t base_seed = 0;
  top.get("seed", base_seed);
  if (top.has("seeds")) {
    if (top.has("n_seeds")) throw Error(ErrorCode::ValidationError, "'seeds' and 'n_seeds' are exclusive");
    top.get("seeds", spec.seeds);
  } else {
    long long n_seeds = 5;
    top.get("n_seeds", n_seeds);
    if (n_seeds < 1) throw Error(ErrorCode::ValidationError, "'n_seeds' must be >= 1");
    spec.seeds.clear();
    for (long long i = 0; i < n_seeds; ++i) spec.seeds.push_back(base_seed + static_cast<std::uint64_t>(i));
  }
  std::string out;
  if (top.get("output_dir", out)) spec.output_dir = out;
  top.get("target_ratio", spec.target_ratio);
  top.finish();

  spec.validate();
  return spec;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  return parse_spec(read_text_file(path));
}

PreparedData prepare_data(const ExperimentSpec& spec) {
  if (spec.task != TaskKind::Tagging) throw Error(ErrorCode::InvalidConfig, "prepare_data needs a tagging spec");
  PreparedData out;
  if (spec.data) {
    out.pool = read_conll_file(spec.data->train, spec.data->token_col, spec.data->label_col);
    const Corpus test = read_conll_file(spec.data->test, spec.data->token_col, spec.data->label_col);
    // Re-index test labels into the pool's label set.
    out.test.label_names = out.pool.label_names;
    for (const auto& s : test.sentences) {
      TaggedSentence t = s;
      for (auto& l : t.labels) {
        const auto id = out.pool.label_id(test.label_names[l]);
        if (!id) throw Error(ErrorCode::InvalidConfig, "test label '" + test.label_names[l] + "' not in training data");
        l = *id;
      }
      out.test.sentences.push_back(std::move(t));
    }
  } else {
    SyntheticCorpusConfig cfg = spec.synthetic->corpus;
    const std::size_t copies = cfg.copies_per_template;
    cfg.copies_per_template = copies + spec.synthetic->test_copies;
    const Corpus all = generate_synthetic_corpus(cfg);
    std::vector<std::size_t> pool_idx, test_idx;
    for (std::size_t i = 0; i < all.size(); ++i)
      (i % cfg.copies_per_template < copies ? pool_idx : test_idx).push_back(i);
    out.pool = subset(all, pool_idx);
    out.test = subset(all, test_idx);
  }

  if (spec.pairs) {
    out.aux_pairs = read_pair_file(*spec.pairs, spec.pairs_sick_scale);
  } else if (spec.synthetic) {
    // Auxiliary pairs come from a separate corpus drawn by the same generator.
    SyntheticCorpusConfig aux = spec.synthetic->corpus;
    aux.seed = derive_seed(aux.seed, 0xa0c5);
    out.aux_pairs = generate_pair_dataset(generate_synthetic_corpus(aux), spec.aux_pairs, derive_seed(aux.seed, 1));
  } else {
    out.aux_pairs = generate_pair_dataset(out.pool, spec.aux_pairs, 0xa0c5);
  }
  return out;
}

namespace {

std::optional<LabelId> outside_id(const LoopConfig& cfg, const Corpus& pool) {
  if (!cfg.outside_label) return std::nullopt;
  return pool.label_id(*cfg.outside_label);
}

std::string opt_str(const std::optional<double>& v) { return v ? format_fixed(*v) : "NA"; }

void write_reports(const std::filesystem::path& dir, const std::vector<RunLog>& runs,
                   const std::vector<std::string>& methods, const std::vector<MethodSummary>& summary) {
  for (const auto& m : methods) {
    std::vector<const RunLog*> mine;
    for (const auto& r : runs)
      if (r.method == m) mine.push_back(&r);
    write_text_file(dir / ("curve_" + m + ".csv"), curve_csv(mine));
  }
  write_text_file(dir / "summary.csv", summary_csv(summary));
}

std::string run_stem(const RunLog& log) { return "run_" + log.method + "_seed" + std::to_string(log.seed); }

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

double full_data_f1(const ExperimentSpec& spec, const PreparedData& data) {
  LoopConfig cfg = spec.loop;
  cfg.seed = spec.seeds.front();
  const TaggerModel model = train_tagger(data.pool, loop_tagger_hyper(cfg));
  return evaluate_f1(model, data.test, outside_id(cfg, data.pool));
}

std::string curve_csv(const std::vector<const RunLog*>& runs) {
  std::string out =
      "iter,n_runs,labeled_fraction_mean,labeled_fraction_std,test_f1_mean,test_f1_std,cost_tokens_mean,"
      "cost_tokens_std\n";
  std::size_t rows = 0;
  for (const auto* r : runs) rows = std::max(rows, r->records.size());
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<double> frac, f1, cost;
    std::size_t iter = 0;
    for (const auto* r : runs) {
      if (i >= r->records.size()) continue;
      const auto& rec = r->records[i];
      iter = rec.iter;
      frac.push_back(rec.labeled_fraction);
      f1.push_back(rec.test_f1);
      cost.push_back(static_cast<double>(rec.cost_tokens));
    }
    out += std::to_string(iter) + ',' + std::to_string(frac.size()) + ',' + format_fixed(mean(frac)) + ',' +
           format_fixed(stddev(frac)) + ',' + format_fixed(mean(f1)) + ',' + format_fixed(stddev(f1)) + ',' +
           format_fixed(mean(cost), 3) + ',' + format_fixed(stddev(cost), 3) + '\n';
  }
  return out;
}

std::vector<MethodSummary> summarize(const std::vector<RunLog>& runs, const std::vector<std::string>& methods,
                                     double full_f1, double target_ratio) {
  std::vector<MethodSummary> out;
  const double target = target_ratio * full_f1;
  for (const auto& m : methods) {
    MethodSummary s;
    s.method = m;
    s.full_data_f1 = full_f1;
    s.target_f1 = target;
    std::vector<double> fractions, tokens, final_frac, final_f1;
    for (const auto& r : runs) {
      if (r.method != m || r.records.empty()) continue;
      ++s.n_seeds;
      for (const auto& rec : r.records) {
        if (rec.test_f1 >= target) {
          ++s.reached_seeds;
          fractions.push_back(rec.labeled_fraction);
          tokens.push_back(static_cast<double>(rec.cost_tokens));
          break;
        }
      }
      final_frac.push_back(r.records.back().labeled_fraction);
      final_f1.push_back(r.records.back().test_f1);
    }
    if (!fractions.empty()) {
      s.fraction_to_target = mean(fractions);
      s.tokens_to_target = mean(tokens);
    }
    s.final_labeled_fraction = mean(final_frac);
    s.final_f1 = mean(final_f1);
    out.push_back(std::move(s));
  }
  const auto none = std::find_if(out.begin(), out.end(), [](const MethodSummary& s) { return s.method == "none"; });
  if (none != out.end() && none->fraction_to_target) {
    const double base = *none->fraction_to_target;
    for (auto& s : out)
      if (s.fraction_to_target) s.reduction_vs_none = base - *s.fraction_to_target;
  }
  return out;
}

std::string summary_csv(const std::vector<MethodSummary>& summary) {
  std::string out =
      "method,n_seeds,full_data_f1,target_f1,reached_seeds,fraction_to_target,tokens_to_target,"
      "final_labeled_fraction,final_f1,reduction_vs_none\n";
  for (const auto& s : summary) {
    out += s.method + ',' + std::to_string(s.n_seeds) + ',' + format_fixed(s.full_data_f1) + ',' +
           format_fixed(s.target_f1) + ',' + std::to_string(s.reached_seeds) + ',' + opt_str(s.fraction_to_target) +
           ',' + opt_str(s.tokens_to_target) + ',' + format_fixed(s.final_labeled_fraction) + ',' +
           format_fixed(s.final_f1) + ',' + opt_str(s.reduction_vs_none) + '\n';
  }
  return out;
}

namespace {

std::vector<PredictionRecord> translation_records(const ExperimentSpec& spec) {
  if (spec.translation.records) return parse_attention_records(read_text_file(*spec.translation.records));
  return synthesize_attention_records(spec.translation.synthetic_records, spec.translation.max_len,
                                      spec.translation.seed);
}

std::vector<std::size_t> select_with_budget(const std::vector<ScoredCandidate>& scored, StrategyConfig strategy,
                                            std::size_t budget) {
  if (strategy.mode == SelectionMode::TopFraction && !scored.empty())
    strategy.fraction = std::min(1.0, static_cast<double>(budget) / static_cast<double>(scored.size()));
  return select_candidates(scored, strategy);
}

std::string scores_csv(const std::vector<ScoredCandidate>& scored, const std::vector<std::size_t>& selected) {
  const std::set<std::size_t> chosen(selected.begin(), selected.end());
  std::string out = "index,score,uncertainty,selected\n";
  for (const auto& c : scored)
    out += std::to_string(c.index) + ',' + format_double(c.score) + ',' + format_double(c.uncertainty()) + ',' +
           (chosen.count(c.index) ? "1" : "0") + '\n';
  return out;
}

ExperimentResult run_translation(const ExperimentSpec& spec) {
  const auto records = translation_records(spec);
  std::string out = "index,src_len,pred_len,lc,cs,ads\n";
  std::vector<ScoredCandidate> scored;
  const bool higher = higher_is_uncertain(spec.loop.strategy.kind);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    std::string ads = "NA";
    try {
      ads = format_double(ads_score(r));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateRow) throw;
    }
    out += std::to_string(i) + ',' + std::to_string(r.src_len) + ',' + std::to_string(r.pred_len) + ',' +
           format_double(lc_score(r)) + ',' + format_double(coverage_score(r)) + ',' + ads + '\n';
    try {
      scored.push_back({i, score_record(r, spec.loop.strategy.kind), higher});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateRow) throw;
    }
  }
  write_text_file(spec.output_dir / "translation_scores.csv", out);
  write_text_file(spec.output_dir / "scores.csv", scores_csv(scored, select_candidates(scored, spec.loop.strategy)));
  return {};
}

void write_meta(const std::filesystem::path& dir, const std::vector<std::string>& methods,
                const std::vector<std::uint64_t>& seeds, double full_f1, double target_ratio) {
  nlohmann::ordered_json meta;
  meta["methods"] = methods;
  meta["seeds"] = seeds;
  meta["full_data_f1"] = format_double(full_f1);
  meta["target_ratio"] = format_double(target_ratio);
  write_text_file(dir / "meta.json", meta.dump(2) + "\n");
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, bool quiet) {
  spec.validate();
  if (spec.task == TaskKind::TranslationScoring) return run_translation(spec);

  const PreparedData data = prepare_data(spec);
  const double full_f1 = full_data_f1(spec, data);
  if (!quiet)
    std::fprintf(stderr, "pool %zu sentences, test %zu, full-data F1 %.4f\n", data.pool.size(), data.test.size(),
                 full_f1);

  ExperimentResult result;
  std::vector<std::string> methods;
  for (DedupMode m : spec.methods()) {
    methods.emplace_back(to_string(m));
    for (std::uint64_t seed : spec.seeds) {
      LoopConfig cfg = spec.loop;
      cfg.dedup = m;
      cfg.seed = seed;
      RunLog log = run_active2_learning(cfg, data.pool, data.test, data.aux_pairs);
      const std::string stem = run_stem(log);
      write_text_file(spec.output_dir / (stem + ".jsonl"), runlog_to_jsonl(log));
      write_text_file(spec.output_dir / (stem + ".csv"), runlog_csv(log));
      if (!quiet)
        std::fprintf(stderr, "%s seed %llu: final F1 %.4f at %.3f of pool\n", log.method.c_str(),
                     static_cast<unsigned long long>(seed), log.records.back().test_f1,
                     log.records.back().labeled_fraction);
      result.runs.push_back(std::move(log));
    }
  }
  result.summary = summarize(result.runs, methods, full_f1, spec.target_ratio);
  write_reports(spec.output_dir, result.runs, methods, result.summary);
  write_meta(spec.output_dir, methods, spec.seeds, full_f1, spec.target_ratio);
  return result;
}

std::vector<MethodSummary> report(const std::filesystem::path& dir) {
  json meta;
  try {
    meta = json::parse(read_text_file(dir / "meta.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("meta.json: ") + e.what());
  }
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
  double full_f1 = 0.0, ratio = 0.0;
  try {
    methods = meta.at("methods").get<std::vector<std::string>>();
    seeds = meta.at("seeds").get<std::vector<std::uint64_t>>();
    full_f1 = parse_double(meta.at("full_data_f1").get<std::string>());
    ratio = parse_double(meta.at("target_ratio").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("meta.json: ") + e.what());
  }
  std::vector<RunLog> runs;
  for (const auto& m : methods)
    for (std::uint64_t seed : seeds) {
      const auto path = dir / ("run_" + m + "_seed" + std::to_string(seed) + ".jsonl");
      runs.push_back(runlog_from_jsonl(read_text_file(path), m, seed));
    }
  auto summary = summarize(runs, methods, full_f1, ratio);
  write_reports(dir, runs, methods, summary);
  return summary;
}

namespace {

struct InitialState {
  PreparedData data;
  LoopConfig cfg;
  Split split;
  std::shared_ptr<const TaggerModel> model;
};

InitialState initial_state(const ExperimentSpec& spec, std::uint64_t seed) {
  InitialState st;
  st.data = prepare_data(spec);
  st.cfg = spec.loop;
  st.cfg.seed = seed;
  st.split = loop_initial_split(st.cfg, st.data.pool.size());
  st.model = std::make_shared<const TaggerModel>(
      train_tagger(subset(st.data.pool, st.split.labeled), loop_tagger_hyper(st.cfg)));
  return st;
}

}  // namespace

std::string score_pool(const ExperimentSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (spec.task == TaskKind::TranslationScoring) {
    ExperimentSpec copy = spec;
    copy.translation.seed = spec.translation.records ? spec.translation.seed : seed;
    const auto records = translation_records(copy);
    std::vector<ScoredCandidate> scored;
    const bool higher = higher_is_uncertain(spec.loop.strategy.kind);
    for (std::size_t i = 0; i < records.size(); ++i) {
      try {
        scored.push_back({i, score_record(records[i], spec.loop.strategy.kind), higher});
      } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateRow) throw;
      }
    }
    return scores_csv(scored, select_candidates(scored, spec.loop.strategy));
  }
  const InitialState st = initial_state(spec, seed);
  std::vector<ScoredCandidate> scored;
  const bool higher = higher_is_uncertain(st.cfg.strategy.kind);
  for (std::size_t i : st.split.unlabeled)
    scored.push_back(
        {i, score_sentence(*st.model, st.data.pool.sentences[i], st.cfg.strategy, derive_seed(seed, i)), higher});
  const std::size_t budget = std::min(
      st.split.unlabeled.size(),
      std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(st.cfg.per_iter_fraction * st.data.pool.size()))));
  return scores_csv(scored, select_with_budget(scored, st.cfg.strategy, budget));
}

std::string cluster_candidates(const ExperimentSpec& spec, std::uint64_t seed, std::string_view scores) {
  spec.validate();
  if (spec.task != TaskKind::Tagging) throw Error(ErrorCode::ValidationError, "cluster needs a tagging spec");
  if (!uses_head(spec.loop.dedup) && spec.loop.dedup != DedupMode::Cosine &&
      spec.loop.dedup != DedupMode::InferSentLike)
    throw Error(ErrorCode::ValidationError, "'loop.dedup' must be a clustering mode for cluster");

  std::vector<std::size_t> indices;
  std::vector<double> uncertainty;
  std::istringstream in{std::string(scores)};
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      if (line.rfind("index,", 0) != 0) throw Error(ErrorCode::ParseError, "scores file: missing header");
      header = false;
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cols.push_back(c);
    if (cols.size() != 4) throw Error(ErrorCode::ParseError, "scores file: expected 4 columns: " + line);
    if (cols[3] != "1") continue;
    try {
      indices.push_back(static_cast<std::size_t>(std::stoull(cols[0])));
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "scores file: bad index: " + cols[0]);
    }
    uncertainty.push_back(parse_double(cols[2]));
  }

  const InitialState st = initial_state(spec, seed);
  std::vector<TaggedSentence> candidates;
  for (std::size_t i : indices) {
    if (i >= st.data.pool.size()) throw Error(ErrorCode::ValidationError, "scores file index out of range");
    candidates.push_back(st.data.pool.sentences[i]);
  }
  if (candidates.size() < 2) throw Error(ErrorCode::ValidationError, "cluster needs at least 2 selected candidates");
  const DedupHeads heads = train_dedup_heads(st.cfg, *st.model, st.data.aux_pairs);
  const ClusterAssignment assign = dedup_cluster(st.cfg, heads, st.model, candidates, derive_seed(seed, 0xc1));
  return cluster_assignment_csv(assign, indices, pick_representatives(assign, uncertainty, st.cfg.per_cluster));
}

}  // namespace a2l
