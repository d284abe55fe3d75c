#pragma once

// Staged pipeline behind the command-line tool. Every stage reads its inputs
// from and writes its outputs to the artifact directory, so stages can be
// re-run independently. Stage seeds derive from the master seed as
// master + fnv1a64(stage name).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "specaug/augment.hpp"
#include "specaug/confusion.hpp"
#include "specaug/dataset.hpp"
#include "specaug/evaluate.hpp"
#include "specaug/network.hpp"
#include "specaug/partition.hpp"

namespace specaug {

struct PipelineConfig {
  SyntheticSpec data;  // its seed field is ignored; the stage seed is used
  double train_fraction = 0.7;
  double holdout_fraction = 0.15;
  double test_fraction = 0.15;

  std::vector<std::size_t> trunk_dims{1024, 256};
  std::vector<std::size_t> generalist_dims{128, 128};
  TrainConfig base_train{0.05, 0.9, 32, 12, 0};
  TrainConfig augmented_train{0.05, 0.9, 32, 24, 0};

  std::vector<MatrixMode> modes{MatrixMode::confusion, MatrixMode::codetection};
  std::size_t top_k = 0;  // 0: ceil(C / 6)
  std::size_t spectral_clusters = 6;
  double degree_epsilon = 1e-12;
  std::vector<std::size_t> head_dims{8, 8};
  AttachPoint attach = AttachPoint::trunk;
  std::size_t k_eval = 0;  // 0: min(50, C)

  std::uint64_t master_seed = 1;
  std::filesystem::path out_dir = "artifacts";

  std::size_t effective_top_k() const;
  std::size_t effective_k_eval() const;
  std::uint64_t seed_for(std::string_view stage) const;
};

// Parses `key = value` lines; `#` starts a comment. Unknown keys and bad
// values raise ConfigError naming the key.
PipelineConfig parse_config(const std::string& text, const std::string& source = "config");
PipelineConfig load_config(const std::filesystem::path& path);
// Throws ConfigError naming the offending field.
void validate_config(const PipelineConfig& cfg);
// Canonical `key = value` rendering; parse_config(render_config(c)) == c.
std::string render_config(const PipelineConfig& cfg);

struct ArtifactPaths {
  std::filesystem::path root;

  std::filesystem::path train() const { return root / "data" / "train.txt"; }
  std::filesystem::path holdout() const { return root / "data" / "holdout.txt"; }
  std::filesystem::path test() const { return root / "data" / "test.txt"; }
  std::filesystem::path planted() const { return root / "data" / "planted_partition.txt"; }
  std::filesystem::path base_model() const { return root / "base" / "model.manifest"; }
  std::filesystem::path base_loss() const { return root / "base" / "loss_trace.txt"; }
  std::filesystem::path confusion(MatrixMode m) const;
  std::filesystem::path spectral_partition(MatrixMode m) const;
  std::filesystem::path randomized_partition(MatrixMode m) const;
  // Directory holding the augmented model trained on a partition file.
  std::filesystem::path augmented_dir(const std::filesystem::path& partition) const;
  std::filesystem::path eval_text(const std::string& name) const { return root / "eval" / (name + ".txt"); }
  std::filesystem::path eval_csv(const std::string& name) const { return root / "eval" / (name + ".csv"); }
  std::filesystem::path summary() const { return root / "summary.txt"; }
};

void cmd_generate(const PipelineConfig& cfg);
void cmd_train_base(const PipelineConfig& cfg);
void cmd_confusions(const PipelineConfig& cfg, MatrixMode mode);

struct ClusterOutcome {
  LabelPartition spectral;
  std::optional<LabelPartition> randomized;
  std::optional<double> spectral_ari;  // against the planted partition, when known
  std::optional<double> randomized_ari;
};
ClusterOutcome cmd_cluster(const PipelineConfig& cfg, MatrixMode mode, std::optional<std::uint64_t> randomize_seed);

// Returns the augmented model manifest.
std::filesystem::path cmd_augment_train(const PipelineConfig& cfg, const std::filesystem::path& partition);

// Evaluates base or augmented manifests on the test split; the first is the
// overhead baseline. Writes eval/<name>.txt and eval/<name>.csv.
ComparisonTable cmd_eval(const PipelineConfig& cfg, const std::vector<std::filesystem::path>& manifests,
                         const std::string& name);

// Runs every stage for every configured mode and writes summary.txt.
std::string cmd_run_all(const PipelineConfig& cfg);

}  // namespace specaug
