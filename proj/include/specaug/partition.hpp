#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "specaug/linalg.hpp"

namespace specaug {

enum class Provenance { spectral, randomized, planted };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

// Disjoint cover of the labels [0, num_labels) by nonempty clusters. Labels
// within a cluster are kept ascending.
struct LabelPartition {
  std::size_t num_labels = 0;
  std::vector<std::vector<std::size_t>> clusters;
  Provenance provenance = Provenance::spectral;

  std::size_t num_clusters() const { return clusters.size(); }
  // cluster index for each label
  std::vector<std::size_t> cluster_of() const;
  std::vector<std::size_t> cluster_sizes() const;

  bool operator==(const LabelPartition&) const = default;
};

// Throws ValidationError unless p is a true partition.
void validate_partition(const LabelPartition& p);

// Builds a partition from per-label cluster ids in [0, k); every id must be used.
LabelPartition partition_from_assignments(const std::vector<std::size_t>& cluster_of, std::size_t k,
                                          Provenance provenance);

struct SpectralConfig {
  std::size_t num_clusters = 6;
  std::uint64_t kmeans_seed = 0;
  double degree_epsilon = 1e-12;
};

// Ng-Jordan-Weiss spectral clustering on a symmetric nonnegative affinity:
//   zero the diagonal, D = diag(row sums) (+ degree_epsilon where a degree is
//   zero), L = D^-1/2 B D^-1/2, stack the G leading eigenvectors of L as
//   columns, normalize rows to unit length, then k-means the rows.
// Clusters come back ordered by their smallest label.
LabelPartition spectral_cluster(const DenseMatrix& similarity, const SpectralConfig& cfg);

// Same cluster cardinalities, labels relabeled by a seeded uniform permutation.
LabelPartition randomized_control(const LabelPartition& p, std::uint64_t seed);

// Adjusted Rand index between two partitions of the same label set.
double adjusted_rand_index(const LabelPartition& a, const LabelPartition& b);

// Text format: `C G provenance` then one ascending cluster per line.
void write_partition(std::ostream& out, const LabelPartition& p);
namespace textio {
class LineReader;
}
LabelPartition read_partition(textio::LineReader& reader);
void save_partition(const std::filesystem::path& path, const LabelPartition& p);
LabelPartition load_partition(const std::filesystem::path& path);

}  // namespace specaug
