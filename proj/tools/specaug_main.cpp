// specaug: staged command-line driver for the augmentation pipeline.
//
// Exit codes: 0 success, 1 other failure (parse/validation), 2 config error,
// 3 missing artifact, 4 numerical failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "specaug/errors.hpp"
#include "specaug/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kMissing = 3, kNumerical = 4 };

struct Options {
  std::string config_path;
  std::string out_dir;
  std::string mode;
  std::optional<std::uint64_t> randomize;
  std::string partition;
  std::vector<std::string> manifests;
  std::string eval_name = "comparison";
};

specaug::PipelineConfig resolve_config(const Options& opt) {
  specaug::PipelineConfig cfg;
  if (!opt.config_path.empty()) cfg = specaug::load_config(opt.config_path);
  if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
  specaug::validate_config(cfg);
  return cfg;
}

std::vector<specaug::MatrixMode> resolve_modes(const Options& opt, const specaug::PipelineConfig& cfg) {
  if (opt.mode.empty()) return cfg.modes;
  try {
    return {specaug::matrix_mode_from_string(opt.mode)};
  } catch (const specaug::InvalidArgument& e) {
    throw specaug::ConfigError(std::string("--mode: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral label-cluster augmentation of multi-label classifiers"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--config", opt.config_path, "Config file of `key = value` lines");
  app.add_option("--out", opt.out_dir, "Artifact directory (overrides the config)");

  auto* generate = app.add_subcommand("generate", "Generate the synthetic dataset and its splits");
  auto* train_base = app.add_subcommand("train-base", "Train the base classifier");
  auto* confusions = app.add_subcommand("confusions", "Compute confusion or co-detection matrices on the holdout split");
  confusions->add_option("--mode", opt.mode, "confusion or codetection (default: every configured mode)");
  auto* cluster = app.add_subcommand("cluster", "Spectrally cluster labels from a stored matrix");
  cluster->add_option("--mode", opt.mode, "confusion or codetection (default: every configured mode)");
  cluster->add_option("--randomize", opt.randomize, "Also write a size-preserving random control with this seed");
  auto* augment_train = app.add_subcommand("augment-train", "Attach and train specialist heads for a partition");
  augment_train->add_option("--partition", opt.partition, "Partition file")->required();
  auto* eval = app.add_subcommand("eval", "Evaluate model manifests on the test split; the first is the baseline");
  eval->add_option("manifests", opt.manifests, "Model manifests")->required()->expected(2, -1);
  eval->add_option("--name", opt.eval_name, "Base name of the eval/<name>.txt and .csv outputs");
  auto* run_all = app.add_subcommand("run-all", "Run every stage and write summary.txt");

  for (auto* sub : {generate, train_base, confusions, cluster, augment_train, eval, run_all}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    const specaug::PipelineConfig cfg = resolve_config(opt);
    if (generate->parsed()) {
      specaug::cmd_generate(cfg);
    } else if (train_base->parsed()) {
      specaug::cmd_train_base(cfg);
    } else if (confusions->parsed()) {
      for (auto mode : resolve_modes(opt, cfg)) specaug::cmd_confusions(cfg, mode);
    } else if (cluster->parsed()) {
      for (auto mode : resolve_modes(opt, cfg)) {
        const auto outcome = specaug::cmd_cluster(cfg, mode, opt.randomize);
        std::cout << specaug::to_string(mode) << ": " << outcome.spectral.num_clusters() << " clusters";
        if (outcome.spectral_ari) std::cout << ", ARI vs planted " << *outcome.spectral_ari;
        if (outcome.randomized_ari) std::cout << ", control ARI " << *outcome.randomized_ari;
        std::cout << '\n';
      }
    } else if (augment_train->parsed()) {
      std::cout << specaug::cmd_augment_train(cfg, opt.partition).string() << '\n';
    } else if (eval->parsed()) {
      std::vector<std::filesystem::path> paths(opt.manifests.begin(), opt.manifests.end());
      std::cout << specaug::render_text(specaug::cmd_eval(cfg, paths, opt.eval_name));
    } else if (run_all->parsed()) {
      std::cout << specaug::cmd_run_all(cfg);
    }
    return kOk;
  } catch (const specaug::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const specaug::MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return kMissing;
  } catch (const specaug::ConvergenceError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
