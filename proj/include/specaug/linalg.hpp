#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

namespace specaug {

// Row-major dense matrix of doubles; always at least 1x1.
class DenseMatrix {
 public:
  DenseMatrix() : DenseMatrix(1, 1) {}
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return entries_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return entries_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {entries_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {entries_.data() + r * cols_, cols_}; }

  std::span<double> entries() { return entries_; }
  std::span<const double> entries() const { return entries_; }

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> entries_;
};

DenseMatrix transpose(const DenseMatrix& m);

// a * b. Throws InvalidArgument when a.cols() != b.rows().
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// a^T * b, without materializing the transpose.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
// a * b^T, without materializing the transpose.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);
double max_abs_asymmetry(const DenseMatrix& m);
double trace(const DenseMatrix& m);

struct EigenDecomposition {
  std::vector<double> values;  // descending
  DenseMatrix vectors;         // column i pairs with values[i]
};

struct JacobiOptions {
  int max_sweeps = 100;
  // Stop when the off-diagonal Frobenius norm falls to this fraction of the
  // matrix's Frobenius norm.
  double tolerance = 1e-12;
  double max_asymmetry = 1e-9;
};

// Cyclic Jacobi eigensolver. The input is averaged with its transpose first;
// asymmetry beyond options.max_asymmetry is rejected. Each eigenvector's
// first significant component is made positive so results are reproducible.
EigenDecomposition symmetric_eigen(const DenseMatrix& m, const JacobiOptions& options = {});

struct KMeansResult {
  std::vector<std::size_t> assignments;
  DenseMatrix centroids;  // k x dims
  double inertia = 0.0;
  std::size_t iterations = 0;
};

// k-means++ seeding followed by Lloyd iterations until the assignment stops
// changing (or max_iterations). Empty clusters take the point farthest from
// its centroid; nearest-centroid ties go to the lowest index.
KMeansResult kmeans(const DenseMatrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iterations = 300);

// One further Lloyd iteration (assign, repair, recompute means) from a result.
KMeansResult lloyd_step(const DenseMatrix& points, const KMeansResult& from);

// Bare text format: `rows cols` then one row per line.
void write_matrix(std::ostream& out, const DenseMatrix& m);
namespace textio {
class LineReader;
}
DenseMatrix read_matrix(textio::LineReader& reader);

// Tagged file wrappers around the bare format.
void save_matrix(const std::filesystem::path& path, const DenseMatrix& m);
DenseMatrix load_matrix(const std::filesystem::path& path);

}  // namespace specaug
