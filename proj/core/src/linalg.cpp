#include "qsspf/linalg.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <vector>

#include <Eigen/SparseLU>

namespace qsspf {

Factorization factorize(const SparseMatrix& a) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("factorize: matrix is " + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + ", not square");
  }
  Factorization f;
  f.n_ = a.rows();
  f.lu_ = std::make_shared<Factorization::Lu>();
  if (a.rows() == 0) return f;

  SparseMatrix compressed = a;
  compressed.makeCompressed();
  f.lu_->analyzePattern(compressed);
  f.lu_->factorize(compressed);
  if (f.lu_->info() != Eigen::Success) {
    // Eigen reports the 1-based column where the zero pivot appeared.
    const std::string msg = f.lu_->lastErrorMessage();
    std::ptrdiff_t pivot = -1;
    if (const auto at = msg.find_last_of(' '); at != std::string::npos) {
      pivot = std::strtol(msg.c_str() + at + 1, nullptr, 10) - 1;
    }
    throw SingularMatrixError("singular matrix: zero pivot at elimination step " +
                                  std::to_string(pivot),
                              pivot);
  }
  return f;
}

Vector Factorization::solve(const Vector& b) const {
  if (b.size() != n_) throw std::invalid_argument("solve: dimension mismatch");
  if (n_ == 0) return b;
  return lu_->solve(b);
}

Vector Factorization::solve_transposed(const Vector& b) const {
  if (b.size() != n_) throw std::invalid_argument("solve: dimension mismatch");
  if (n_ == 0) return b;
  return lu_->transpose().solve(b);
}

double norm1(const SparseMatrix& a) {
  double best = 0.0;
  for (int k = 0; k < a.outerSize(); ++k) {
    double sum = 0.0;
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) sum += std::abs(it.value());
    best = std::max(best, sum);
  }
  return best;
}

double norm_inf(const SparseMatrix& a) {
  Vector rows = Vector::Zero(a.rows());
  for (int k = 0; k < a.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) {
      rows[it.row()] += std::abs(it.value());
    }
  }
  return a.rows() == 0 ? 0.0 : rows.maxCoeff();
}

namespace {

double inverse_norm1_estimate(const Factorization& f) {
  const auto n = f.dimension();
  if (n == 0) return 0.0;
  if (n == 1) return std::abs(f.solve(Vector::Ones(1))[0]);

  constexpr int kMaxIterations = 5;
  Vector x = Vector::Constant(n, 1.0 / static_cast<double>(n));
  double estimate = 0.0;
  Eigen::Index previous_j = -1;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    const Vector y = f.solve(x);
    estimate = std::max(estimate, y.lpNorm<1>());
    Vector xi(n);
    for (Eigen::Index i = 0; i < n; ++i) xi[i] = y[i] >= 0.0 ? 1.0 : -1.0;
    const Vector z = f.solve_transposed(xi);
    Eigen::Index j = 0;
    const double z_max = z.cwiseAbs().maxCoeff(&j);
    if (iter > 0 && (z_max <= z.dot(x) || j == previous_j)) break;
    x.setZero();
    x[j] = 1.0;
    previous_j = j;
  }

  // Higham's safeguard against the rare cases where the iteration stalls.
  Vector alt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    alt[i] = sign * (1.0 + static_cast<double>(i) / static_cast<double>(n - 1));
  }
  const double alt_estimate = 2.0 * f.solve(alt).lpNorm<1>() / (3.0 * n);
  return std::max(estimate, alt_estimate);
}

}  // namespace

double condition_estimate(const Factorization& f, const SparseMatrix& a) {
  return norm1(a) * inverse_norm1_estimate(f);
}

void write_triplets(const SparseMatrix& a, std::ostream& sink) {
  sink << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
  char buf[48];
  for (int k = 0; k < a.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) {
      std::snprintf(buf, sizeof buf, "%.17g", it.value());
      sink << it.row() << ' ' << it.col() << ' ' << buf << '\n';
    }
  }
}

SparseMatrix read_triplets(std::istream& source) {
  long rows = 0, cols = 0, nnz = 0;
  if (!(source >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0) {
    throw std::runtime_error("read_triplets: malformed header");
  }
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(nnz));
  for (long i = 0; i < nnz; ++i) {
    long r = 0, c = 0;
    double v = 0.0;
    if (!(source >> r >> c >> v)) {
      throw std::runtime_error("read_triplets: truncated entry " + std::to_string(i));
    }
    if (r < 0 || r >= rows || c < 0 || c >= cols) {
      throw std::runtime_error("read_triplets: index out of range at entry " +
                               std::to_string(i));
    }
    entries.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
  }
  SparseMatrix a(rows, cols);
  a.setFromTriplets(entries.begin(), entries.end());
  a.makeCompressed();
  return a;
}

}  // namespace qsspf
