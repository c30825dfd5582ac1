#pragma once

// Dense kernels shared by every selector: least squares over a column subset,
// projection onto the orthogonal complement of a column span, and column
// correlations with a residual.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seqattn/errors.hpp"

namespace seqattn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using IndexList = std::vector<Index>;

struct LstSqSolution {
  Vector coefficients;  // one entry per column of X_S
  Vector residual;      // y - X_S * coefficients
  double residual_norm_sq = 0.0;
  Index rank = 0;
};

namespace detail {

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw ContractError(std::string(what) + " contains non-finite entries");
}

inline void require_rows(const Matrix& x, const Vector& y, const char* op) {
  if (x.rows() != y.size()) {
    throw ContractError(std::string(op) + ": matrix has " + std::to_string(x.rows()) +
                        " rows but vector has length " + std::to_string(y.size()));
  }
}

}  // namespace detail

/// Gathers the columns of x listed in cols, in that order.
inline Matrix select_columns(const Matrix& x, std::span<const Index> cols) {
  Matrix out(x.rows(), static_cast<Index>(cols.size()));
  for (Index j = 0; j < out.cols(); ++j) {
    const Index c = cols[static_cast<std::size_t>(j)];
    detail::require(c >= 0 && c < x.cols(), "select_columns: column index out of range");
    out.col(j) = x.col(c);
  }
  return out;
}

inline Matrix select_rows(const Matrix& x, Index begin, Index end) {
  detail::require(0 <= begin && begin <= end && end <= x.rows(), "select_rows: bad range");
  return x.middleRows(begin, end - begin);
}

/// Minimum-norm least squares via column-pivoted Householder QR followed by a
/// complete orthogonal decomposition. Columns whose pivot falls below
/// eps * max(n, |S|) * (largest column norm) are treated as dependent.
inline LstSqSolution least_squares(const Matrix& xs, const Vector& y) {
  detail::require_rows(xs, y, "least_squares");
  detail::require_finite(xs, "least_squares: X_S");
  detail::require_finite(y, "least_squares: y");

  LstSqSolution sol;
  if (xs.cols() == 0) {
    sol.coefficients = Vector(0);
    sol.residual = y;
    sol.residual_norm_sq = y.squaredNorm();
    return sol;
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod;
  const double eps = std::numeric_limits<double>::epsilon();
  cod.setThreshold(eps * static_cast<double>(std::max(xs.rows(), xs.cols())));
  cod.compute(xs);
  sol.rank = cod.rank();
  sol.coefficients = sol.rank == 0 ? Vector::Zero(xs.cols()).eval() : cod.solve(y).eval();
  sol.residual = y - xs * sol.coefficients;
  // One refinement step tightens orthogonality of the residual on
  // ill-conditioned subsets.
  if (sol.rank > 0) {
    const Vector correction = cod.solve(sol.residual);
    sol.coefficients += correction;
    sol.residual = y - xs * sol.coefficients;
  }
  sol.residual_norm_sq = sol.residual.squaredNorm();
  return sol;
}

/// P_S^perp y, computed through a least-squares solve (never an n x n projector).
inline Vector project_residual(const Matrix& xs, const Vector& y) {
  detail::require_rows(xs, y, "project_residual");
  if (xs.cols() == 0) return y;
  return least_squares(xs, y).residual;
}

/// Entry i is <X_i, r>.
inline Vector column_correlations(const Matrix& x, const Vector& r) {
  detail::require_rows(x, r, "column_correlations");
  return x.transpose() * r;
}

inline std::vector<bool> membership(Index d, std::span<const Index> s) {
  std::vector<bool> in(static_cast<std::size_t>(d), false);
  for (Index i : s) {
    detail::require(i >= 0 && i < d, "feature index out of range");
    in[static_cast<std::size_t>(i)] = true;
  }
  return in;
}

/// Squared Euclidean norm of each column.
inline Vector column_norms_sq(const Matrix& x) { return x.colwise().squaredNorm().transpose(); }

}  // namespace seqattn
