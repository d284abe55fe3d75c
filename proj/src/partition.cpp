#include "specaug/partition.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "specaug/errors.hpp"
#include "specaug/rng.hpp"
#include "specaug/textio.hpp"

namespace specaug {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::spectral:
      return "spectral";
    case Provenance::randomized:
      return "randomized";
    case Provenance::planted:
      return "planted";
  }
  return "unknown";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "spectral") return Provenance::spectral;
  if (s == "randomized") return Provenance::randomized;
  if (s == "planted") return Provenance::planted;
  throw InvalidArgument("unknown partition provenance '" + std::string(s) + "'");
}

std::vector<std::size_t> LabelPartition::cluster_of() const {
  std::vector<std::size_t> out(num_labels, 0);
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (std::size_t label : clusters[c]) out.at(label) = c;
  return out;
}

std::vector<std::size_t> LabelPartition::cluster_sizes() const {
  std::vector<std::size_t> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) out.push_back(c.size());
  return out;
}

void validate_partition(const LabelPartition& p) {
  if (p.num_labels == 0) throw ValidationError("partition: num_labels must be positive");
  if (p.clusters.empty()) throw ValidationError("partition: no clusters");
  std::vector<bool> seen(p.num_labels, false);
  std::size_t total = 0;
  for (std::size_t c = 0; c < p.clusters.size(); ++c) {
    if (p.clusters[c].empty()) throw ValidationError("partition: cluster " + std::to_string(c) + " is empty");
    for (std::size_t label : p.clusters[c]) {
      if (label >= p.num_labels) {
        throw ValidationError("partition: label " + std::to_string(label) + " out of range [0, " +
                              std::to_string(p.num_labels) + ")");
      }
      if (seen[label]) throw ValidationError("partition: label " + std::to_string(label) + " appears twice");
      seen[label] = true;
      ++total;
    }
  }
  if (total != p.num_labels) throw ValidationError("partition: clusters do not cover every label");
}

LabelPartition partition_from_assignments(const std::vector<std::size_t>& cluster_of, std::size_t k,
                                          Provenance provenance) {
  LabelPartition p{cluster_of.size(), std::vector<std::vector<std::size_t>>(k), provenance};
  for (std::size_t label = 0; label < cluster_of.size(); ++label) p.clusters.at(cluster_of[label]).push_back(label);
  validate_partition(p);
  return p;
}

LabelPartition spectral_cluster(const DenseMatrix& similarity, const SpectralConfig& cfg) {
  const std::size_t n = similarity.rows();
  if (similarity.cols() != n) throw InvalidArgument("spectral_cluster: similarity matrix is not square");
  if (cfg.num_clusters == 0 || cfg.num_clusters > n) {
    throw InvalidArgument("spectral_cluster: cluster count " + std::to_string(cfg.num_clusters) +
                          " must be in [1, " + std::to_string(n) + "]");
  }
  if (!(cfg.degree_epsilon > 0.0)) throw InvalidArgument("spectral_cluster: degree_epsilon must be positive");

  DenseMatrix affinity(n, n);
  bool any_edge = false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = similarity(i, j);
      if (v < -1e-9) {
        throw InvalidArgument("spectral_cluster: negative similarity " + std::to_string(v) + " at (" +
                              std::to_string(i) + ", " + std::to_string(j) + ")");
      }
      if (i == j) continue;
      affinity(i, j) = std::max(v, 0.0);
      if (affinity(i, j) > 0.0) any_edge = true;
    }
  }
  if (!any_edge) {
    throw InvalidArgument(
        "spectral_cluster: similarity has no off-diagonal mass; every degree is zero and degree_epsilon "
        "alone cannot produce a meaningful normalization");
  }

  std::vector<double> inv_sqrt_degree(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) d += affinity(i, j);
    if (d == 0.0) d = cfg.degree_epsilon;
    inv_sqrt_degree[i] = 1.0 / std::sqrt(d);
  }
  DenseMatrix normalized(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      normalized(i, j) = inv_sqrt_degree[i] * affinity(i, j) * inv_sqrt_degree[j];

  const EigenDecomposition eig = symmetric_eigen(normalized);
  const std::size_t g = cfg.num_clusters;
  DenseMatrix embedding(n, g);
  for (std::size_t i = 0; i < n; ++i) {
    double norm2 = 0.0;
    for (std::size_t c = 0; c < g; ++c) {
      embedding(i, c) = eig.vectors(i, c);
      norm2 += embedding(i, c) * embedding(i, c);
    }
    const double norm = std::sqrt(norm2);
    if (norm < 1e-12) {
      for (std::size_t c = 0; c < g; ++c) embedding(i, c) = c == 0 ? 1.0 : 0.0;
    } else {
      for (std::size_t c = 0; c < g; ++c) embedding(i, c) /= norm;
    }
  }

  const KMeansResult km = kmeans(embedding, g, cfg.kmeans_seed);
  LabelPartition p = partition_from_assignments(km.assignments, g, Provenance::spectral);
  std::sort(p.clusters.begin(), p.clusters.end(),
            [](const auto& x, const auto& y) { return x.front() < y.front(); });
  return p;
}

LabelPartition randomized_control(const LabelPartition& p, std::uint64_t seed) {
  validate_partition(p);
  std::vector<std::size_t> perm(p.num_labels);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);

  LabelPartition out{p.num_labels, {}, Provenance::randomized};
  out.clusters.reserve(p.clusters.size());
  for (const auto& cluster : p.clusters) {
    std::vector<std::size_t> mapped;
    mapped.reserve(cluster.size());
    for (std::size_t label : cluster) mapped.push_back(perm[label]);
    std::sort(mapped.begin(), mapped.end());
    out.clusters.push_back(std::move(mapped));
  }
  validate_partition(out);
  return out;
}

namespace {
double choose2(double n) { return n * (n - 1.0) / 2.0; }
}  // namespace

double adjusted_rand_index(const LabelPartition& a, const LabelPartition& b) {
  if (a.num_labels != b.num_labels) {
    throw InvalidArgument("adjusted_rand_index: partitions cover " + std::to_string(a.num_labels) + " and " +
                          std::to_string(b.num_labels) + " labels");
  }
  validate_partition(a);
  validate_partition(b);
  const auto ca = a.cluster_of();
  const auto cb = b.cluster_of();
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> table;
  for (std::size_t i = 0; i < a.num_labels; ++i) ++table[{ca[i], cb[i]}];

  double index = 0.0;
  for (const auto& [cell, count] : table) index += choose2(static_cast<double>(count));
  double sum_a = 0.0;
  for (std::size_t s : a.cluster_sizes()) sum_a += choose2(static_cast<double>(s));
  double sum_b = 0.0;
  for (std::size_t s : b.cluster_sizes()) sum_b += choose2(static_cast<double>(s));

  const double total = choose2(static_cast<double>(a.num_labels));
  const double expected = total > 0.0 ? sum_a * sum_b / total : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  // Only reachable when both partitions are all-singletons or both a single cluster.
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

void write_partition(std::ostream& out, const LabelPartition& p) {
  out << p.num_labels << ' ' << p.clusters.size() << ' ' << to_string(p.provenance) << '\n';
  for (const auto& cluster : p.clusters) {
    for (std::size_t i = 0; i < cluster.size(); ++i) {
      if (i) out << ' ';
      out << cluster[i];
    }
    out << '\n';
  }
}

LabelPartition read_partition(textio::LineReader& reader) {
  const auto header = reader.next("partition header `C G provenance`");
  const auto tokens = textio::split_ws(header);
  if (tokens.size() != 3) reader.fail("partition header must be `C G provenance`");
  LabelPartition p;
  p.num_labels = reader.to_count(tokens[0]);
  const std::size_t g = reader.to_count(tokens[1]);
  try {
    p.provenance = provenance_from_string(tokens[2]);
  } catch (const InvalidArgument& e) {
    reader.fail(e.what());
  }
  for (std::size_t c = 0; c < g; ++c) {
    const auto line = reader.next("cluster " + std::to_string(c));
    std::vector<std::size_t> cluster;
    for (auto t : textio::split_ws(line)) cluster.push_back(reader.to_count(t));
    std::sort(cluster.begin(), cluster.end());
    p.clusters.push_back(std::move(cluster));
  }
  validate_partition(p);
  return p;
}

void save_partition(const std::filesystem::path& path, const LabelPartition& p) {
  auto out = textio::open_output(path);
  textio::write_tag(out, "partition");
  write_partition(out, p);
}

LabelPartition load_partition(const std::filesystem::path& path) {
  auto in = textio::open_input(path);
  textio::LineReader reader(in, path.string());
  textio::expect_tag(reader, "partition");
  return read_partition(reader);
}

}  // namespace specaug
