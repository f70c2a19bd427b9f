#include "calm/alignment.hpp"

#include <random>
#include <string>

#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "calm/error.hpp"

namespace calm {

namespace {

const char* const kModule = "alignment";

constexpr double kArmijo = 1e-4;
constexpr double kMinStep = 1e-14;
constexpr double kStationary = 1e-12;

// The ascent runs on X = Q^T, whose first 2K columns are the q_j of the
// objective.
double objective_columns(const Matrix& x, const Matrix& concepts) {
  return x.leftCols(concepts.cols()).cwiseProduct(concepts).sum();
}

struct Ascent {
  Matrix x;
  std::vector<double> objective_trace;
  std::vector<double> orthogonality_trace;
  bool converged = false;
  int iterations = 0;
  int accepted = 0;
};

Ascent cayley_ascent(Matrix x, const Matrix& concepts, const AlignmentConfig& config) {
  const Index d = x.rows();
  const Index m = concepts.cols();
  const Matrix identity = Matrix::Identity(d, d);

  Ascent run;
  double f = objective_columns(x, concepts);
  run.objective_trace.push_back(f);
  run.orthogonality_trace.push_back(orthogonality_error(x));

  double trial = config.step_init;
  for (int it = 0; it < config.max_iters; ++it) {
    run.iterations = it + 1;
    // Skew generator A = G X^T - X G^T with Euclidean gradient G = [C | 0].
    const Matrix a = concepts * x.leftCols(m).transpose() - x.leftCols(m) * concepts.transpose();
    if (!a.allFinite()) throw Error(kModule, "non-finite gradient during optimization");
    if (a.norm() <= kStationary) {
      run.converged = true;
      break;
    }
    const double slope = concepts.cwiseProduct((a * x).leftCols(m)).sum();

    auto step = [&](double t, Matrix& y) {
      const Matrix half = (0.5 * t) * a;
      y = (identity - half).partialPivLu().solve((identity + half) * x);
      const double value = objective_columns(y, concepts);
      if (!std::isfinite(value) || !y.allFinite())
        throw Error(kModule, "non-finite iterate during optimization");
      return value;
    };

    bool accepted = false;
    double tau = trial;
    Matrix y;
    double fy = f;
    while (tau >= kMinStep) {
      fy = step(tau, y);
      if (fy >= f + kArmijo * tau * slope) {
        accepted = true;
        break;
      }
      tau *= 0.5;
    }
    if (!accepted) {
      // No ascent left at machine precision.
      run.converged = true;
      break;
    }
    // Keep halving while it strictly helps: a step that passes the Armijo
    // test can still overshoot modes that rotate twice as fast.
    Matrix shorter;
    while (0.5 * tau >= kMinStep) {
      const double f_short = step(0.5 * tau, shorter);
      if (!(f_short > fy)) break;
      tau *= 0.5;
      fy = f_short;
      y.swap(shorter);
    }

    const double delta = fy - f;
    x = std::move(y);
    f = fy;
    ++run.accepted;
    run.objective_trace.push_back(f);
    run.orthogonality_trace.push_back(orthogonality_error(x));
    trial = 2.0 * tau;
    if (delta < config.tol) {
      run.converged = true;
      break;
    }
  }
  run.x = std::move(x);
  return run;
}

Matrix random_orthogonal(Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(d, d);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < d; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

void check_concepts(const Matrix& concepts) {
  if (concepts.cols() > concepts.rows())
    throw Error(kModule, "2K = " + std::to_string(concepts.cols()) + " exceeds dimension " +
                             std::to_string(concepts.rows()));
  if (!concepts.allFinite()) throw Error(kModule, "concept directions contain non-finite values");
}

void check_config(const AlignmentConfig& config) {
  if (config.max_iters < 1) throw Error(kModule, "max_iters must be at least 1");
  if (!(config.step_init > 0.0)) throw Error(kModule, "step_init must be positive");
  if (!(config.tol >= 0.0)) throw Error(kModule, "tol must be non-negative");
  if (config.restarts < 0) throw Error(kModule, "restarts must be non-negative");
}

AlignmentModel to_model(Ascent&& run, Index concept_count) {
  AlignmentModel model;
  model.rotation = run.x.transpose();
  model.concept_count = static_cast<int>(concept_count);
  model.objective_trace = std::move(run.objective_trace);
  model.orthogonality_trace = std::move(run.orthogonality_trace);
  model.converged = run.converged;
  model.iterations = run.iterations;
  model.accepted_steps = run.accepted;
  return model;
}

}  // namespace

double alignment_objective(const Matrix& rotation, const Matrix& concepts) {
  return alignment_quality(rotation, concepts).sum();
}

Matrix procrustes_initialization(const Matrix& concepts) {
  check_concepts(concepts);
  const Index d = concepts.rows();
  const Index m = concepts.cols();
  if (m == 0) return Matrix::Identity(d, d);

  Eigen::HouseholderQR<Matrix> qr(concepts);
  const Matrix full = qr.householderQ();
  Matrix frame(d, d);
  frame << concepts, full.rightCols(d - m);

  Eigen::BDCSVD<Matrix> svd(frame, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return (svd.matrixU() * svd.matrixV().transpose()).transpose();
}

AlignmentModel learn_alignment(const Matrix& concepts, const AlignmentConfig& config) {
  check_concepts(concepts);
  check_config(config);

  Ascent best = cayley_ascent(procrustes_initialization(concepts).transpose(), concepts, config);
  if (config.restarts > 0) {
    std::mt19937_64 rng(config.seed);
    for (int r = 0; r < config.restarts; ++r) {
      Ascent run = cayley_ascent(random_orthogonal(concepts.rows(), rng), concepts, config);
      if (run.objective_trace.back() > best.objective_trace.back()) best = std::move(run);
    }
  }
  return to_model(std::move(best), concepts.cols());
}

AlignmentModel refine_alignment(const Matrix& concepts, const Matrix& initial_rotation,
                                const AlignmentConfig& config) {
  check_concepts(concepts);
  check_config(config);
  const Index d = concepts.rows();
  if (initial_rotation.rows() != d || initial_rotation.cols() != d)
    throw Error(kModule, "initial rotation must be " + std::to_string(d) + " x " + std::to_string(d));
  const double orth = orthogonality_error(initial_rotation);
  if (!(orth <= 1e-8)) throw Error(kModule, "initial rotation is not orthogonal");
  return to_model(cayley_ascent(initial_rotation.transpose(), concepts, config), concepts.cols());
}

AlignmentModel learn_alignment(const ConceptBasis& basis, const AlignmentConfig& config) {
  return learn_alignment(basis.directions, config);
}

Vector alignment_quality(const Matrix& rotation, const Matrix& concepts) {
  if (rotation.cols() != concepts.rows() || rotation.rows() < concepts.cols())
    throw Error(kModule, "rotation and concept dimensions disagree");
  return (rotation.topRows(concepts.cols()).cwiseProduct(concepts.transpose())).rowwise().sum();
}

Vector alignment_quality(const AlignmentModel& model, const ConceptBasis& basis) {
  return alignment_quality(model.rotation, basis.directions);
}

AlignmentModel identity_alignment(Index dim, int concept_count) {
  AlignmentModel model;
  model.rotation = Matrix::Identity(dim, dim);
  model.concept_count = concept_count;
  model.converged = true;
  model.objective_trace.push_back(0.0);
  model.orthogonality_trace.push_back(0.0);
  return model;
}

}  // namespace calm
