#pragma once

#include <cstddef>
#include <memory>

#include "qsspf/linalg.hpp"

namespace qsspf {

struct StateIndex;

/// A nonlinear system g(y) = 0 together with its Jacobian, viewed as the
/// Newton flow g_y(y) y' = -g(y). Solvers only see this interface, so the
/// same code drives the power-flow network and small analytic models.
class FlowProblem {
 public:
  virtual ~FlowProblem() = default;

  virtual std::size_t dimension() const = 0;
  virtual Vector residual(const Vector& y) const = 0;

  /// Fills `out` with g_y(y). Implementations with a fixed sparsity pattern
  /// may reuse the storage of a previously returned matrix.
  virtual void jacobian(const Vector& y, SparseMatrix& out) const = 0;

  /// Variable layout for problems that have one; null otherwise.
  virtual std::shared_ptr<const StateIndex> state_index() const { return nullptr; }
};

}  // namespace qsspf
