#pragma once

// Label-similarity matrices built from a model's own top-K predictions on a
// holdout set:
//   confusion:    a_ij = mean over x of [i in topK(x)] * [j in truth(x)]
//   co-detection: a_ij = mean over x of [i in topK(x)] * [j in topK(x)]
// and the symmetrized similarity B = A^T A.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "specaug/dataset.hpp"
#include "specaug/linalg.hpp"
#include "specaug/network.hpp"

namespace specaug {

struct TopKPredictions {
  std::size_t k = 0;
  std::size_t num_labels = 0;
  // Per example: k distinct labels by descending score, ties to the lower label.
  std::vector<std::vector<std::size_t>> ranked;
};

// Top-k of one score vector under the (score desc, label asc) order.
std::vector<std::size_t> top_k_labels(std::span<const double> scores, std::size_t k);

TopKPredictions top_k_from_scores(const DenseMatrix& scores, std::size_t k);
TopKPredictions top_k(const NetworkParams& net, const Dataset& data, std::size_t k);

enum class MatrixMode { confusion, codetection };

std::string_view to_string(MatrixMode m);
MatrixMode matrix_mode_from_string(std::string_view s);

struct ConfusionMatrix {
  MatrixMode mode = MatrixMode::confusion;
  std::size_t k = 0;
  std::size_t holdout_size = 0;
  DenseMatrix a;
};

struct SimilarityMatrix {
  DenseMatrix b;
};

ConfusionMatrix confusion_matrix(const TopKPredictions& preds, const Dataset& data);
ConfusionMatrix codetection_matrix(const TopKPredictions& preds);
SimilarityMatrix symmetrize(const ConfusionMatrix& a);

// ceil(C / 6)
std::size_t default_top_k(std::size_t num_labels);

// Header line `mode k holdout_size C`, then the matrix text format.
void save_confusion(const std::filesystem::path& path, const ConfusionMatrix& m);
ConfusionMatrix load_confusion(const std::filesystem::path& path);

}  // namespace specaug
