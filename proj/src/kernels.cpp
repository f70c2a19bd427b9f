#include "calm/kernels.hpp"

namespace calm::kernels {

namespace serial {

Matrix affine(const Matrix& m, const Vector& b, const Matrix& x) {
  Matrix y(m.rows(), x.cols());
  for (Index n = 0; n < x.cols(); ++n) {
    for (Index i = 0; i < m.rows(); ++i) {
      double acc = b(i);
      for (Index k = 0; k < m.cols(); ++k) acc += m(i, k) * x(k, n);
      y(i, n) = acc;
    }
  }
  return y;
}

Vector column_mean(const Matrix& x) {
  Vector mean = Vector::Zero(x.rows());
  for (Index n = 0; n < x.cols(); ++n)
    for (Index i = 0; i < x.rows(); ++i) mean(i) += x(i, n);
  return mean / static_cast<double>(x.cols());
}

Matrix centered_covariance(const Matrix& x, const Vector& mean) {
  const Index d = x.rows();
  Matrix cov = Matrix::Zero(d, d);
  for (Index n = 0; n < x.cols(); ++n) {
    for (Index j = 0; j < d; ++j) {
      const double xj = x(j, n) - mean(j);
      for (Index i = 0; i < d; ++i) cov(i, j) += (x(i, n) - mean(i)) * xj;
    }
  }
  return cov / static_cast<double>(x.cols());
}

Matrix group_means(const Matrix& x, std::span<const Index> offsets) {
  const Index groups = static_cast<Index>(offsets.size()) - 1;
  Matrix out = Matrix::Zero(x.rows(), groups);
  for (Index g = 0; g < groups; ++g) {
    for (Index n = offsets[g]; n < offsets[g + 1]; ++n)
      for (Index i = 0; i < x.rows(); ++i) out(i, g) += x(i, n);
    out.col(g) /= static_cast<double>(offsets[g + 1] - offsets[g]);
  }
  return out;
}

Matrix project_out(const Matrix& x, const Vector& direction) {
  double norm2 = 0.0;
  for (Index i = 0; i < direction.size(); ++i) norm2 += direction(i) * direction(i);
  Matrix y = x;
  for (Index n = 0; n < x.cols(); ++n) {
    double dot = 0.0;
    for (Index i = 0; i < x.rows(); ++i) dot += x(i, n) * direction(i);
    const double coef = dot / norm2;
    for (Index i = 0; i < x.rows(); ++i) y(i, n) -= coef * direction(i);
  }
  return y;
}

}  // namespace serial

namespace parallel {

namespace {

Index block_count(Index n) { return (n + kBlock - 1) / kBlock; }

}  // namespace

Matrix affine(const Matrix& m, const Vector& b, const Matrix& x) {
  Matrix y(m.rows(), x.cols());
  const Index blocks = block_count(x.cols());
#pragma omp parallel for schedule(static)
  for (Index blk = 0; blk < blocks; ++blk) {
    const Index begin = blk * kBlock;
    const Index width = std::min(kBlock, x.cols() - begin);
    auto out = y.middleCols(begin, width);
    out.noalias() = m * x.middleCols(begin, width);
    out.colwise() += b;
  }
  return y;
}

Vector column_mean(const Matrix& x) {
  // Row-wise sums keep the reduction over samples in one fixed order.
  Vector mean(x.rows());
  const Index blocks = block_count(x.rows());
#pragma omp parallel for schedule(static)
  for (Index blk = 0; blk < blocks; ++blk) {
    const Index begin = blk * kBlock;
    const Index end = std::min(begin + kBlock, x.rows());
    for (Index i = begin; i < end; ++i) mean(i) = x.row(i).sum();
  }
  return mean / static_cast<double>(x.cols());
}

Matrix centered_covariance(const Matrix& x, const Vector& mean) {
  const Index d = x.rows();
  const Matrix centered = x.colwise() - mean;
  Matrix cov(d, d);
  const Index blocks = block_count(d);
#pragma omp parallel for schedule(dynamic)
  for (Index blk = 0; blk < blocks; ++blk) {
    const Index begin = blk * kBlock;
    const Index height = std::min(kBlock, d - begin);
    cov.middleRows(begin, height).noalias() =
        centered.middleRows(begin, height) * centered.transpose();
  }
  return cov / static_cast<double>(x.cols());
}

Matrix group_means(const Matrix& x, std::span<const Index> offsets) {
  const Index groups = static_cast<Index>(offsets.size()) - 1;
  Matrix out(x.rows(), groups);
#pragma omp parallel for schedule(static)
  for (Index g = 0; g < groups; ++g) {
    const Index width = offsets[g + 1] - offsets[g];
    out.col(g) = x.middleCols(offsets[g], width).rowwise().sum() / static_cast<double>(width);
  }
  return out;
}

Matrix project_out(const Matrix& x, const Vector& direction) {
  const Vector unit = direction / direction.norm();
  Matrix y(x.rows(), x.cols());
  const Index blocks = block_count(x.cols());
#pragma omp parallel for schedule(static)
  for (Index blk = 0; blk < blocks; ++blk) {
    const Index begin = blk * kBlock;
    const Index width = std::min(kBlock, x.cols() - begin);
    const auto in = x.middleCols(begin, width);
    const Eigen::RowVectorXd coef = unit.transpose() * in;
    y.middleCols(begin, width) = in - unit * coef;
  }
  return y;
}

}  // namespace parallel

}  // namespace calm::kernels
