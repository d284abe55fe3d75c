#include "specaug/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "specaug/errors.hpp"
#include "specaug/rng.hpp"
#include "specaug/textio.hpp"

namespace specaug {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), entries_(rows * cols, fill) {
  if (rows == 0 || cols == 0) throw InvalidArgument("DenseMatrix: dimensions must be at least 1x1");
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  if (rows == 0 || cols == 0) throw InvalidArgument("DenseMatrix: dimensions must be at least 1x1");
  if (entries_.size() != rows * cols) {
    throw InvalidArgument("DenseMatrix: expected " + std::to_string(rows * cols) + " entries, got " +
                          std::to_string(entries_.size()));
  }
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  if (rows_ == 0 || cols_ == 0) throw InvalidArgument("DenseMatrix: dimensions must be at least 1x1");
  entries_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw InvalidArgument("DenseMatrix: ragged initializer");
    entries_.insert(entries_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix transpose(const DenseMatrix& m) {
  DenseMatrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  return t;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw InvalidArgument("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                          " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto src = b.row(k);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) throw InvalidArgument("matmul_tn: row counts differ");
  DenseMatrix out(a.cols(), b.cols());
  for (std::size_t s = 0; s < a.rows(); ++s) {
    auto src = b.row(s);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double asi = a(s, i);
      if (asi == 0.0) continue;
      auto dst = out.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += asi * src[j];
    }
  }
  return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) throw InvalidArgument("matmul_nt: column counts differ");
  return matmul(a, transpose(b));
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("max_abs_diff: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.entries()[i] - b.entries()[i]));
  return worst;
}

double max_abs_asymmetry(const DenseMatrix& m) {
  if (m.rows() != m.cols()) throw InvalidArgument("max_abs_asymmetry: matrix is not square");
  double worst = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j) worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
  return worst;
}

double trace(const DenseMatrix& m) {
  if (m.rows() != m.cols()) throw InvalidArgument("trace: matrix is not square");
  double t = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) t += m(i, i);
  return t;
}

namespace {

double off_diagonal_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

double frobenius_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.entries()) s += v * v;
  return std::sqrt(s);
}

// Applies the rotation in the (p, q) plane that zeroes a(p, q).
void rotate(DenseMatrix& a, DenseMatrix& v, std::size_t p, std::size_t q) {
  const std::size_t n = a.rows();
  const double apq = a(p, q);
  const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
  const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  const double c = 1.0 / std::sqrt(t * t + 1.0);
  const double s = t * c;

  for (std::size_t k = 0; k < n; ++k) {
    const double akp = a(k, p);
    const double akq = a(k, q);
    a(k, p) = c * akp - s * akq;
    a(k, q) = s * akp + c * akq;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double apk = a(p, k);
    const double aqk = a(q, k);
    a(p, k) = c * apk - s * aqk;
    a(q, k) = s * apk + c * aqk;
  }
  a(p, q) = 0.0;
  a(q, p) = 0.0;

  for (std::size_t k = 0; k < n; ++k) {
    const double vkp = v(k, p);
    const double vkq = v(k, q);
    v(k, p) = c * vkp - s * vkq;
    v(k, q) = s * vkp + c * vkq;
  }
}

}  // namespace

EigenDecomposition symmetric_eigen(const DenseMatrix& m, const JacobiOptions& options) {
  if (m.rows() != m.cols()) {
    throw InvalidArgument("symmetric_eigen: matrix is " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + ", not square");
  }
  const double asym = max_abs_asymmetry(m);
  if (!(asym <= options.max_asymmetry)) {
    throw InvalidArgument("symmetric_eigen: asymmetry " + std::to_string(asym) + " exceeds tolerance");
  }
  const std::size_t n = m.rows();
  DenseMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (m(i, j) + m(j, i));
  DenseMatrix v = DenseMatrix::identity(n);

  const double threshold = options.tolerance * frobenius_norm(a);
  double off = off_diagonal_norm(a);
  int sweep = 0;
  while (off > threshold) {
    if (sweep == options.max_sweeps) {
      throw ConvergenceError("symmetric_eigen: no convergence after " + std::to_string(sweep) + " sweeps",
                             off);
    }
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q)
        if (a(p, q) != 0.0) rotate(a, v, p, q);
    off = off_diagonal_norm(a);
    ++sweep;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  EigenDecomposition out{std::vector<double>(n), DenseMatrix(n, n)};
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    out.values[c] = a(src, src);
    double largest = 0.0;
    for (std::size_t r = 0; r < n; ++r) largest = std::max(largest, std::abs(v(r, src)));
    double sign = 1.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (std::abs(v(r, src)) > 1e-8 * largest) {
        sign = v(r, src) < 0.0 ? -1.0 : 1.0;
        break;
      }
    }
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = sign * v(r, src);
  }
  return out;
}

namespace {

double squared_distance(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

std::vector<std::size_t> nearest_centroids(const DenseMatrix& points, const DenseMatrix& centroids) {
  std::vector<std::size_t> assign(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      const double d = squared_distance(points.row(i), centroids.row(c));
      if (d < best) {
        best = d;
        best_c = c;
      }
    }
    assign[i] = best_c;
  }
  return assign;
}

// Moves the farthest-from-centroid point of a multi-member cluster into each
// empty cluster, and centers the empty cluster on it.
void repair_empty(const DenseMatrix& points, DenseMatrix& centroids, std::vector<std::size_t>& assign) {
  const std::size_t k = centroids.rows();
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t a : assign) ++counts[a];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    double worst = -1.0;
    std::size_t donor = 0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (counts[assign[i]] < 2) continue;
      const double d = squared_distance(points.row(i), centroids.row(assign[i]));
      if (d > worst) {
        worst = d;
        donor = i;
      }
    }
    --counts[assign[donor]];
    assign[donor] = c;
    counts[c] = 1;
    std::copy(points.row(donor).begin(), points.row(donor).end(), centroids.row(c).begin());
  }
}

DenseMatrix cluster_means(const DenseMatrix& points, const std::vector<std::size_t>& assign, std::size_t k) {
  DenseMatrix means(k, points.cols());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto dst = means.row(assign[i]);
    auto src = points.row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    ++counts[assign[i]];
  }
  for (std::size_t c = 0; c < k; ++c)
    for (double& x : means.row(c)) x /= static_cast<double>(counts[c]);
  return means;
}

double inertia_of(const DenseMatrix& points, const DenseMatrix& centroids, const std::vector<std::size_t>& assign) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) s += squared_distance(points.row(i), centroids.row(assign[i]));
  return s;
}

DenseMatrix seed_centroids(const DenseMatrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  DenseMatrix centers(k, points.cols());
  std::vector<bool> taken(n, false);
  std::size_t first = rng.index(n);
  taken[first] = true;
  std::copy(points.row(first).begin(), points.row(first).end(), centers.row(0).begin());

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), centers.row(0));

  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double running = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        running += d2[i];
        pick = i;
        if (running > target) break;
      }
    } else {
      // All remaining points coincide with a center; take the lowest unused.
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i]) {
          pick = i;
          break;
        }
      }
    }
    taken[pick] = true;
    std::copy(points.row(pick).begin(), points.row(pick).end(), centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points.row(i), centers.row(c)));
  }
  return centers;
}

}  // namespace

KMeansResult kmeans(const DenseMatrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations) {
  if (k == 0 || k > points.rows()) {
    throw InvalidArgument("kmeans: k = " + std::to_string(k) + " must be in [1, " +
                          std::to_string(points.rows()) + "]");
  }
  Rng rng(seed);
  DenseMatrix centroids = seed_centroids(points, k, rng);
  std::vector<std::size_t> assign = nearest_centroids(points, centroids);
  repair_empty(points, centroids, assign);

  std::size_t iter = 0;
  while (true) {
    centroids = cluster_means(points, assign, k);
    if (iter == max_iterations) break;
    ++iter;
    std::vector<std::size_t> next = nearest_centroids(points, centroids);
    repair_empty(points, centroids, next);
    if (next == assign) break;
    assign = std::move(next);
  }
  const double inertia = inertia_of(points, centroids, assign);
  return {std::move(assign), std::move(centroids), inertia, iter};
}

KMeansResult lloyd_step(const DenseMatrix& points, const KMeansResult& from) {
  const std::size_t k = from.centroids.rows();
  DenseMatrix centroids = from.centroids;
  std::vector<std::size_t> assign = nearest_centroids(points, centroids);
  repair_empty(points, centroids, assign);
  centroids = cluster_means(points, assign, k);
  const double inertia = inertia_of(points, centroids, assign);
  return {std::move(assign), std::move(centroids), inertia, from.iterations + 1};
}

void write_matrix(std::ostream& out, const DenseMatrix& m) {
  out << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      out << textio::format_double(m(r, c));
    }
    out << '\n';
  }
}

DenseMatrix read_matrix(textio::LineReader& reader) {
  const auto header = reader.next("matrix header `rows cols`");
  const auto dims = textio::split_ws(header);
  if (dims.size() != 2) reader.fail("matrix header must be `rows cols`");
  const std::size_t rows = reader.to_count(dims[0]);
  const std::size_t cols = reader.to_count(dims[1]);
  if (rows == 0 || cols == 0) reader.fail("matrix dimensions must be at least 1x1");
  std::vector<double> entries;
  entries.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto line = reader.next("matrix row " + std::to_string(r));
    const auto tokens = textio::split_ws(line);
    if (tokens.size() != cols) {
      reader.fail("matrix row has " + std::to_string(tokens.size()) + " entries, expected " +
                  std::to_string(cols));
    }
    for (auto t : tokens) entries.push_back(reader.to_double(t));
  }
  return DenseMatrix(rows, cols, std::move(entries));
}

void save_matrix(const std::filesystem::path& path, const DenseMatrix& m) {
  auto out = textio::open_output(path);
  textio::write_tag(out, "matrix");
  write_matrix(out, m);
}

DenseMatrix load_matrix(const std::filesystem::path& path) {
  auto in = textio::open_input(path);
  textio::LineReader reader(in, path.string());
  textio::expect_tag(reader, "matrix");
  return read_matrix(reader);
}

}  // namespace specaug
