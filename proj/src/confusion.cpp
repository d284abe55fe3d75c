#include "specaug/confusion.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "specaug/errors.hpp"
#include "specaug/textio.hpp"

namespace specaug {

std::vector<std::size_t> top_k_labels(std::span<const double> scores, std::size_t k) {
  if (k > scores.size()) {
    throw InvalidArgument("top_k: k = " + std::to_string(k) + " exceeds the " + std::to_string(scores.size()) +
                          " labels");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t x, std::size_t y) { return scores[x] > scores[y] || (scores[x] == scores[y] && x < y); });
  idx.resize(k);
  return idx;
}

TopKPredictions top_k_from_scores(const DenseMatrix& scores, std::size_t k) {
  if (k == 0) throw InvalidArgument("top_k: k must be positive");
  TopKPredictions out{k, scores.cols(), {}};
  out.ranked.reserve(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) out.ranked.push_back(top_k_labels(scores.row(r), k));
  return out;
}

TopKPredictions top_k(const NetworkParams& net, const Dataset& data, std::size_t k) {
  if (k > net.num_labels()) {
    throw InvalidArgument("top_k: k = " + std::to_string(k) + " exceeds C = " + std::to_string(net.num_labels()));
  }
  return top_k_from_scores(predict_scores(net, data), k);
}

std::string_view to_string(MatrixMode m) { return m == MatrixMode::confusion ? "confusion" : "codetection"; }

MatrixMode matrix_mode_from_string(std::string_view s) {
  if (s == "confusion") return MatrixMode::confusion;
  if (s == "codetection") return MatrixMode::codetection;
  throw InvalidArgument("unknown matrix mode '" + std::string(s) + "' (expected confusion or codetection)");
}

namespace {

void check_preds(const TopKPredictions& preds) {
  if (preds.ranked.empty()) throw InvalidArgument("confusion: empty holdout set");
  if (preds.num_labels == 0 || preds.k == 0 || preds.k > preds.num_labels) {
    throw InvalidArgument("confusion: invalid top-k predictions");
  }
  for (const auto& list : preds.ranked) {
    if (list.size() != preds.k) throw InvalidArgument("confusion: ranked list of the wrong length");
    for (std::size_t l : list)
      if (l >= preds.num_labels) throw InvalidArgument("confusion: predicted label out of range");
  }
}

// Counts are integers until the final division, so every entry is exactly
// count / |S| rounded once.
ConfusionMatrix finish(MatrixMode mode, const TopKPredictions& preds, const DenseMatrix& counts) {
  ConfusionMatrix m{mode, preds.k, preds.ranked.size(), counts};
  const double n = static_cast<double>(preds.ranked.size());
  for (double& v : m.a.entries()) v /= n;
  return m;
}

}  // namespace

ConfusionMatrix confusion_matrix(const TopKPredictions& preds, const Dataset& data) {
  check_preds(preds);
  if (preds.ranked.size() != data.size()) {
    throw InvalidArgument("confusion_matrix: " + std::to_string(preds.ranked.size()) + " predictions for " +
                          std::to_string(data.size()) + " examples");
  }
  if (data.num_labels != preds.num_labels) throw InvalidArgument("confusion_matrix: label count mismatch");
  const std::size_t c = preds.num_labels;
  DenseMatrix counts(c, c);
  for (std::size_t x = 0; x < data.size(); ++x)
    for (std::size_t i : preds.ranked[x])
      for (std::size_t j : data.examples[x].labels) counts(i, j) += 1.0;
  return finish(MatrixMode::confusion, preds, counts);
}

ConfusionMatrix codetection_matrix(const TopKPredictions& preds) {
  check_preds(preds);
  const std::size_t c = preds.num_labels;
  DenseMatrix counts(c, c);
  for (const auto& list : preds.ranked)
    for (std::size_t i : list)
      for (std::size_t j : list) counts(i, j) += 1.0;
  return finish(MatrixMode::codetection, preds, counts);
}

SimilarityMatrix symmetrize(const ConfusionMatrix& a) {
  SimilarityMatrix s{matmul_tn(a.a, a.a)};
  // Mirror the upper triangle so B is bit-symmetric.
  for (std::size_t i = 0; i < s.b.rows(); ++i)
    for (std::size_t j = i + 1; j < s.b.cols(); ++j) s.b(j, i) = s.b(i, j);
  return s;
}

std::size_t default_top_k(std::size_t num_labels) { return (num_labels + 5) / 6; }

void save_confusion(const std::filesystem::path& path, const ConfusionMatrix& m) {
  auto out = textio::open_output(path);
  textio::write_tag(out, "confusion");
  out << to_string(m.mode) << ' ' << m.k << ' ' << m.holdout_size << ' ' << m.a.rows() << '\n';
  write_matrix(out, m.a);
}

ConfusionMatrix load_confusion(const std::filesystem::path& path) {
  auto in = textio::open_input(path);
  textio::LineReader reader(in, path.string());
  textio::expect_tag(reader, "confusion");
  const auto header = textio::split_ws(reader.next("`mode k holdout_size C`"));
  if (header.size() != 4) reader.fail("confusion header must be `mode k holdout_size C`");
  ConfusionMatrix m;
  try {
    m.mode = matrix_mode_from_string(header[0]);
  } catch (const InvalidArgument& e) {
    reader.fail(e.what());
  }
  m.k = reader.to_count(header[1]);
  m.holdout_size = reader.to_count(header[2]);
  const std::size_t c = reader.to_count(header[3]);
  m.a = read_matrix(reader);
  if (m.a.rows() != c || m.a.cols() != c) reader.fail("confusion matrix is not C x C");
  return m;
}

}  // namespace specaug
