#pragma once

#include <cstddef>
#include <string_view>

#include "calm/corpus.hpp"
#include "calm/linalg.hpp"

namespace calm {

enum class WhiteningMethod { zca, pca };

std::string_view to_string(WhiteningMethod method);
WhiteningMethod parse_whitening_method(std::string_view text);

inline constexpr double kDefaultEigFloor = 1e-6;

/// psi(x) = W (x - mean). Eigenvalues are the covariance spectrum (1/N
/// normalization) in descending order; `floored_eigenvalues` are the values
/// actually inverted, max(lambda_i, eig_floor * lambda_max).
struct WhiteningModel {
  WhiteningMethod method = WhiteningMethod::zca;
  double eig_floor = kDefaultEigFloor;
  Vector mean;
  Matrix transform;
  Matrix inverse;
  Vector eigenvalues;
  Vector floored_eigenvalues;
  Granularity fitted_on = Granularity::answer;
  std::size_t samples = 0;

  Index dim() const { return mean.size(); }
};

/// Builds the model from precomputed moments (covariance with 1/N
/// normalization). The covariance is symmetrized before decomposition.
WhiteningModel whitening_from_moments(Vector mean, const Matrix& covariance, std::size_t samples,
                                      WhiteningMethod method = WhiteningMethod::zca,
                                      double eig_floor = kDefaultEigFloor);

/// Fits on the columns of `data` (d x N, N >= 2). The inverse comes from the
/// same eigendecomposition.
WhiteningModel fit_whitening(const Matrix& data, WhiteningMethod method = WhiteningMethod::zca,
                             double eig_floor = kDefaultEigFloor);

Vector whiten(const WhiteningModel& model, const Vector& x);
Matrix whiten_batch(const WhiteningModel& model, const Matrix& x);
Vector unwhiten(const WhiteningModel& model, const Vector& z);
Matrix unwhiten_batch(const WhiteningModel& model, const Matrix& z);

/// The model that maps every vector to itself (W = I, mean = 0).
WhiteningModel identity_whitening(Index dim);

}  // namespace calm
