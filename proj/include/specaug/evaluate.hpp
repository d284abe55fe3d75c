#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "specaug/augment.hpp"
#include "specaug/linalg.hpp"
#include "specaug/network.hpp"

namespace specaug {

struct MapResult {
  double map_at_k = 0.0;
  // nullopt for classes with no positive example; those are left out of the mean.
  std::vector<std::optional<double>> per_class_ap;
  std::vector<std::size_t> excluded_classes;
  std::size_t k_eval = 0;
};

// Each example keeps only its k_eval highest-scoring labels as detections
// (ties to the lower label). For class c, the detecting examples are ranked by
// (score desc, example index asc) and
//   AP_c = (1 / #positives of c) * sum over hits of precision at the hit,
// so positives that were never detected count as misses.
MapResult map_at_top_k(const DenseMatrix& scores, std::span<const std::vector<std::size_t>> ground_truth,
                       std::size_t k_eval);

// min(50, C)
std::size_t default_k_eval(std::size_t num_labels);

// One multiply-add per weight per example; biases and activations excluded.
// The augmented classifier counts only unmasked connections.
std::uint64_t count_multiply_adds(const NetworkParams& net);
std::uint64_t count_multiply_adds(const AugmentedNetwork& net);

struct EvalReport {
  std::string model_id;
  double map_at_k = 0.0;
  std::vector<std::optional<double>> per_class_ap;
  std::uint64_t multiply_adds = 0;
  std::string baseline_id;      // what overhead_ratio is relative to
  double overhead_ratio = 1.0;
  std::size_t k_eval = 0;
  std::size_t test_size = 0;
};

EvalReport make_report(std::string model_id, const MapResult& map, std::uint64_t multiply_adds, std::size_t test_size);

struct ComparisonRow {
  std::string model_id;
  double map_at_k = 0.0;
  double map_delta = 0.0;  // against the first row
  std::uint64_t multiply_adds = 0;
  double overhead_ratio = 1.0;  // against the first row
};

struct ComparisonTable {
  std::size_t k_eval = 0;
  std::vector<ComparisonRow> rows;
};

// Rows in input order, ratios against the first report. Requires at least two
// reports sharing k_eval and test set size.
ComparisonTable compare(std::span<const EvalReport> reports);

std::string render_text(const ComparisonTable& table);
// Header `model,map_at_k,multiply_adds,overhead_ratio`; reals at 17 digits.
std::string render_csv(const ComparisonTable& table);
std::vector<ComparisonRow> parse_csv(const std::string& text);

}  // namespace specaug
