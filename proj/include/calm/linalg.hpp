#pragma once

#include <Eigen/Dense>

namespace calm {

// Embedding batches are stored column-per-vector (d x N), matching the corpus
// payload layout.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Frobenius distance of A^T A from the identity.
inline double orthogonality_error(const Matrix& a) {
  return (a.transpose() * a - Matrix::Identity(a.cols(), a.cols())).norm();
}

/// Flips the sign of each column so its largest-magnitude entry is positive
/// (first such entry on ties).
inline void fix_column_signs(Matrix& columns) {
  for (Index j = 0; j < columns.cols(); ++j) {
    Index arg = 0;
    columns.col(j).cwiseAbs().maxCoeff(&arg);
    if (columns(arg, j) < 0.0) columns.col(j) *= -1.0;
  }
}

}  // namespace calm
