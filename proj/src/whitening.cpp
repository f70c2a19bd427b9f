#include "calm/whitening.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "calm/error.hpp"
#include "calm/kernels.hpp"

namespace calm {

namespace {

const char* const kModule = "whitening";

void check_dim(const WhiteningModel& model, Index rows) {
  if (rows != model.dim())
    throw Error(kModule, "dimension mismatch: expected " + std::to_string(model.dim()) + ", got " +
                             std::to_string(rows));
}

}  // namespace

std::string_view to_string(WhiteningMethod method) {
  return method == WhiteningMethod::zca ? "zca" : "pca";
}

WhiteningMethod parse_whitening_method(std::string_view text) {
  if (text == "zca") return WhiteningMethod::zca;
  if (text == "pca") return WhiteningMethod::pca;
  throw Error(kModule, "unknown whitening method '" + std::string(text) + "'");
}

WhiteningModel whitening_from_moments(Vector mean, const Matrix& covariance, std::size_t samples,
                                      WhiteningMethod method, double eig_floor) {
  const Index d = mean.size();
  if (d < 1) throw Error(kModule, "dimension must be positive");
  if (covariance.rows() != d || covariance.cols() != d)
    throw Error(kModule, "covariance shape does not match the mean");
  if (!(eig_floor > 0.0) || !std::isfinite(eig_floor))
    throw Error(kModule, "eigenvalue floor must be a positive finite number");

  WhiteningModel model;
  model.method = method;
  model.eig_floor = eig_floor;
  model.samples = samples;
  model.mean = std::move(mean);

  const Matrix cov = 0.5 * (covariance + covariance.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) throw Error(kModule, "eigendecomposition failed");

  // Eigen returns ascending order; flip to descending.
  const Vector eigenvalues = solver.eigenvalues().reverse();
  Matrix basis = solver.eigenvectors().rowwise().reverse();
  fix_column_signs(basis);

  const double lambda_max = eigenvalues(0);
  if (!(lambda_max > 0.0)) throw Error(kModule, "covariance is zero (lambda_max = 0)");

  model.eigenvalues = eigenvalues;
  model.floored_eigenvalues = eigenvalues.cwiseMax(eig_floor * lambda_max);
  const Vector inv_sqrt = model.floored_eigenvalues.cwiseSqrt().cwiseInverse();
  const Vector sqrt = model.floored_eigenvalues.cwiseSqrt();

  if (method == WhiteningMethod::zca) {
    const Matrix w = basis * inv_sqrt.asDiagonal() * basis.transpose();
    const Matrix w_inv = basis * sqrt.asDiagonal() * basis.transpose();
    model.transform = 0.5 * (w + w.transpose());
    model.inverse = 0.5 * (w_inv + w_inv.transpose());
  } else {
    model.transform = inv_sqrt.asDiagonal() * basis.transpose();
    model.inverse = basis * sqrt.asDiagonal();
  }
  return model;
}

WhiteningModel fit_whitening(const Matrix& data, WhiteningMethod method, double eig_floor) {
  if (data.rows() < 1) throw Error(kModule, "dimension must be positive");
  if (data.cols() < 2) throw Error(kModule, "need at least 2 samples, got " + std::to_string(data.cols()));
  if (!data.allFinite()) throw Error(kModule, "fitting data contains non-finite values");
  Vector mean = kernels::parallel::column_mean(data);
  const Matrix cov = kernels::parallel::centered_covariance(data, mean);
  return whitening_from_moments(std::move(mean), cov, static_cast<std::size_t>(data.cols()), method,
                                eig_floor);
}

Vector whiten(const WhiteningModel& model, const Vector& x) {
  check_dim(model, x.size());
  return model.transform * (x - model.mean);
}

Matrix whiten_batch(const WhiteningModel& model, const Matrix& x) {
  check_dim(model, x.rows());
  return kernels::parallel::affine(model.transform, -(model.transform * model.mean), x);
}

Vector unwhiten(const WhiteningModel& model, const Vector& z) {
  check_dim(model, z.size());
  return model.inverse * z + model.mean;
}

Matrix unwhiten_batch(const WhiteningModel& model, const Matrix& z) {
  check_dim(model, z.rows());
  return kernels::parallel::affine(model.inverse, model.mean, z);
}

WhiteningModel identity_whitening(Index dim) {
  WhiteningModel model;
  model.mean = Vector::Zero(dim);
  model.transform = Matrix::Identity(dim, dim);
  model.inverse = Matrix::Identity(dim, dim);
  model.eigenvalues = Vector::Ones(dim);
  model.floored_eigenvalues = Vector::Ones(dim);
  return model;
}

}  // namespace calm
