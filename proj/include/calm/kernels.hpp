#pragma once

#include <span>

#include "calm/linalg.hpp"

// Data-parallel batch kernels. Every kernel has a plain-loop serial reference
// used by the tests and the benchmark; the library itself calls the OpenMP
// versions. Work is split into fixed-size blocks that do not depend on the
// thread count, so parallel results are reproducible run to run.
namespace calm::kernels {

/// Columns per parallel work item.
inline constexpr Index kBlock = 64;

namespace serial {

/// Y = M X + b 1^T.
Matrix affine(const Matrix& m, const Vector& b, const Matrix& x);
Vector column_mean(const Matrix& x);
/// (1/N) (X - mean 1^T)(X - mean 1^T)^T.
Matrix centered_covariance(const Matrix& x, const Vector& mean);
/// Mean of each contiguous column range [offsets[g], offsets[g+1]).
Matrix group_means(const Matrix& x, std::span<const Index> offsets);
/// Removes from every column its component along `direction`.
Matrix project_out(const Matrix& x, const Vector& direction);

}  // namespace serial

namespace parallel {

Matrix affine(const Matrix& m, const Vector& b, const Matrix& x);
Vector column_mean(const Matrix& x);
Matrix centered_covariance(const Matrix& x, const Vector& mean);
Matrix group_means(const Matrix& x, std::span<const Index> offsets);
Matrix project_out(const Matrix& x, const Vector& direction);

}  // namespace parallel

}  // namespace calm::kernels
