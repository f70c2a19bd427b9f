#pragma once

#include <cstdint>
#include <vector>

#include "calm/concepts.hpp"
#include "calm/linalg.hpp"

namespace calm {

struct AlignmentConfig {
  int max_iters = 1000;
  double step_init = 0.5;
  double tol = 1e-9;
  std::uint64_t seed = 42;
  // Extra ascents from seeded random orthogonal starts; the best final
  // objective wins. Zero keeps the fit fully deterministic without the seed.
  int restarts = 0;
};

/// Orthogonal Q (d x d) whose row j is the axis concept j is rotated onto:
/// (Q z)_j = q_j . z for whitened z.
struct AlignmentModel {
  Matrix rotation;
  int concept_count = 0;
  // Objective after initialization, then after every accepted step.
  std::vector<double> objective_trace;
  // ||Q^T Q - I||_F at the same points.
  std::vector<double> orthogonality_trace;
  bool converged = false;
  int iterations = 0;
  int accepted_steps = 0;

  Index dim() const { return rotation.rows(); }
  double objective() const { return objective_trace.empty() ? 0.0 : objective_trace.back(); }
};

/// sum_j q_j . c_j over the columns of `concepts` (d x 2K).
double alignment_objective(const Matrix& rotation, const Matrix& concepts);

/// Nearest orthogonal matrix to [C | C_perp], where C_perp is an orthonormal
/// completion of span(C). Returned in rotation (row) form.
Matrix procrustes_initialization(const Matrix& concepts);

/// Maximizes the alignment objective over the orthogonal group by Cayley-curve
/// ascent with Armijo backtracking, starting from procrustes_initialization.
AlignmentModel learn_alignment(const Matrix& concepts, const AlignmentConfig& config = {});
AlignmentModel learn_alignment(const ConceptBasis& basis, const AlignmentConfig& config = {});

/// The same ascent from a caller-supplied orthogonal starting rotation.
AlignmentModel refine_alignment(const Matrix& concepts, const Matrix& initial_rotation,
                                const AlignmentConfig& config = {});

/// Per-axis scores q_j . c_j; 1.0 means concept j sits exactly on axis j.
Vector alignment_quality(const Matrix& rotation, const Matrix& concepts);
Vector alignment_quality(const AlignmentModel& model, const ConceptBasis& basis);

AlignmentModel identity_alignment(Index dim, int concept_count = 0);

}  // namespace calm
