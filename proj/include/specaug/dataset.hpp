#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "specaug/linalg.hpp"
#include "specaug/partition.hpp"

namespace specaug {

struct Example {
  std::vector<double> features;
  std::vector<std::size_t> labels;  // ascending, distinct, nonempty

  bool operator==(const Example&) const = default;
};

struct Dataset {
  std::size_t num_labels = 0;
  std::size_t feature_dim = 0;
  std::vector<Example> examples;
  // Generator ground truth; used for evaluation only.
  std::optional<LabelPartition> planted_partition;

  std::size_t size() const { return examples.size(); }
  bool operator==(const Dataset&) const = default;
};

// Throws ValidationError on any broken invariant.
void validate_dataset(const Dataset& d);

// Features stacked as an N x D matrix.
DenseMatrix feature_matrix(const Dataset& d);

struct SyntheticSpec {
  std::size_t num_labels = 60;
  std::size_t groups = 6;
  std::size_t feature_dim = 32;
  std::size_t examples_per_label = 200;
  // 0: label means are independent draws; 1: labels in a group share one mean.
  double confusability = 0.7;
  std::uint64_t seed = 0;
};

// Noise standard deviation of the synthetic generator.
inline constexpr double kSyntheticNoise = 0.5;
// Probability that a co-occurring label is drawn from the primary label's group.
inline constexpr double kSameGroupCooccurrence = 0.8;

// Label l belongs to group l mod G. Label means are
//   (1 - confusability) * prototype_l + confusability * direction_{group(l)}
// with prototypes and group directions drawn from N(0, I). Each example has a
// primary label plus 0-2 co-occurring labels; its features are the average of
// its labels' means plus N(0, 0.5^2) noise per coordinate.
Dataset generate_synthetic(const SyntheticSpec& spec);

struct SplitSpec {
  double train_fraction = 0.7;
  double holdout_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 0;
};

void validate_split_spec(const SplitSpec& s);

struct DatasetSplits {
  Dataset train;
  Dataset holdout;
  Dataset test;
};

// Seeded shuffle, then consecutive slices of round(N * fraction) examples
// for train and holdout; test takes the rest.
DatasetSplits split(const Dataset& d, const SplitSpec& s);
// The shuffled index order used by split, exposed for disjointness checks.
std::vector<std::size_t> split_order(std::size_t n, std::uint64_t seed);

// Text format:
//   C D N
//   k l1 .. lk : f1 .. fD        (N lines)
//   planted                      (optional trailer, followed by the
//   <partition block>             partition text format)
void save_dataset(const std::filesystem::path& path, const Dataset& d);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace specaug
