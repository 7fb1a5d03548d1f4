#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "a2l/experiment.hpp"

namespace {

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("A2L_OUT_DIR"); env && *env) return env;
  return "a2l_out";
}

a2l::ExperimentSpec load(const std::string& path, const std::optional<std::uint64_t>& seed,
                         const std::string& out) {
  a2l::ExperimentSpec spec = a2l::load_spec(path);
  if (seed) spec.seeds = {*seed};
  if (!out.empty()) spec.output_dir = out;
  if (spec.output_dir.empty()) spec.output_dir = default_out_dir();
  return spec;
}

int exit_code(const a2l::Error& e) {
  switch (e.code()) {
    case a2l::ErrorCode::ValidationError:
    case a2l::ErrorCode::ParseError:
    case a2l::ErrorCode::InvalidConfig:
    case a2l::ErrorCode::MalformedLine:
      return 1;
    default:
      return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"a2l: active learning with model-aware redundancy elimination"};
  app.require_subcommand(1);

  std::string spec_path, out, scores_path;
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--spec", spec_path, "experiment spec (JSON, comments allowed)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "run only this seed");
    cmd->add_option("--out", out, "output directory (default $A2L_OUT_DIR or a2l_out)");
    cmd->add_flag("--quiet", quiet, "no progress output");
  };

  CLI::App* run = app.add_subcommand("run", "run the experiment for every method and seed");
  add_common(run);
  CLI::App* score = app.add_subcommand("score", "score the unlabeled pool once and write scores.csv");
  add_common(score);
  CLI::App* cluster = app.add_subcommand("cluster", "deduplicate the selected rows of a scores file");
  add_common(cluster);
  cluster->add_option("--scores", scores_path, "scores file (default <out>/scores.csv)");
  CLI::App* rep = app.add_subcommand("report", "rebuild curves and summary from run logs");
  rep->add_option("--out", out, "directory holding the run logs");
  rep->add_flag("--quiet", quiet, "no output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) {
      const auto spec = load(spec_path, seed, out);
      const auto result = a2l::run_experiment(spec, quiet);
      if (!quiet) {
        if (spec.task == a2l::TaskKind::Tagging)
          std::fputs(a2l::summary_csv(result.summary).c_str(), stdout);
        std::printf("wrote %s\n", spec.output_dir.string().c_str());
      }
    } else if (score->parsed()) {
      const auto spec = load(spec_path, seed, out);
      const auto text = a2l::score_pool(spec, spec.seeds.front());
      a2l::write_text_file(spec.output_dir / "scores.csv", text);
      if (!quiet) std::printf("wrote %s\n", (spec.output_dir / "scores.csv").string().c_str());
    } else if (cluster->parsed()) {
      const auto spec = load(spec_path, seed, out);
      const std::filesystem::path in = scores_path.empty() ? spec.output_dir / "scores.csv" : std::filesystem::path(scores_path);
      const auto text = a2l::cluster_candidates(spec, spec.seeds.front(), a2l::read_text_file(in));
      a2l::write_text_file(spec.output_dir / "clusters.csv", text);
      if (!quiet) std::printf("wrote %s\n", (spec.output_dir / "clusters.csv").string().c_str());
    } else if (rep->parsed()) {
      const std::filesystem::path dir = out.empty() ? default_out_dir() : std::filesystem::path(out);
      const auto summary = a2l::report(dir);
      if (!quiet) std::fputs(a2l::summary_csv(summary).c_str(), stdout);
    }
  } catch (const a2l::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
