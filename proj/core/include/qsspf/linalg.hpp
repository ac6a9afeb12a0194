#pragma once

// Sparse LU factorization, solves and 1-norm condition estimation.

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace qsspf {

/// Column-compressed real sparse matrix. Entries are kept sorted by
/// (column, row) with no duplicates once compressed.
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Vector = Eigen::VectorXd;

class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(const std::string& what, std::ptrdiff_t pivot)
      : std::runtime_error(what), pivot_(pivot) {}

  /// Zero-based elimination step at which a zero pivot was met.
  std::ptrdiff_t pivot() const noexcept { return pivot_; }

 private:
  std::ptrdiff_t pivot_;
};

/// Immutable LU factors of a square sparse matrix with row and column
/// permutations. Copies share the factors; concurrent solves are safe.
class Factorization {
 public:
  std::ptrdiff_t dimension() const noexcept { return n_; }

  Vector solve(const Vector& b) const;
  /// Solves A^T x = b with the same factors.
  Vector solve_transposed(const Vector& b) const;

 private:
  using Lu = Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>;

  friend Factorization factorize(const SparseMatrix& a);

  std::shared_ptr<Lu> lu_;
  std::ptrdiff_t n_ = 0;
};

/// LU with partial pivoting and COLAMD column ordering. Throws
/// std::invalid_argument for a non-square input and SingularMatrixError
/// when elimination meets a zero pivot.
Factorization factorize(const SparseMatrix& a);

/// Induced 1-norm (maximum absolute column sum).
double norm1(const SparseMatrix& a);

/// Induced infinity-norm (maximum absolute row sum).
double norm_inf(const SparseMatrix& a);

/// Estimate of cond_1(A) = ||A||_1 ||A^-1||_1 from existing factors.
///
/// ||A^-1||_1 is estimated with Hager's method as refined by Higham
/// (LAPACK xLACON): alternate solves with A and A^T, moving the probe to
/// the unit vector of the largest dual component until the estimate stops
/// growing, then take the maximum with Higham's alternating-sign test
/// vector. The result is a lower bound on the true value that is almost
/// always within a factor of 3.
double condition_estimate(const Factorization& f, const SparseMatrix& a);

/// Coordinate-triplet text: a header line `rows cols nnz` followed by one
/// `row col value` line per stored entry (zero-based indices).
void write_triplets(const SparseMatrix& a, std::ostream& sink);
SparseMatrix read_triplets(std::istream& source);

}  // namespace qsspf
