#pragma once

#include <string>
#include <vector>

#include "calm/linalg.hpp"

namespace calm {

/// Unit concept directions in whitened space, ordered [neg_1..neg_Kn,
/// pos_1..pos_Kp], with the singular value each was extracted with.
struct ConceptBasis {
  Matrix directions;  // d x (k_neg + k_pos)
  Vector singular_values;
  int k_neg = 0;
  int k_pos = 0;
  Vector normal_mean;  // mu_n used for deflation
  std::vector<std::string> warnings;

  Index dim() const { return directions.rows(); }
  int concept_count() const { return k_neg + k_pos; }
  Matrix negative() const { return directions.leftCols(k_neg); }
  Matrix positive() const { return directions.rightCols(k_pos); }
};

/// x' = x - (x . mu_n) mu_n / |mu_n|^2 for every column.
Matrix project_out_mean(const Matrix& whitened_class, const Vector& normal_mean);

/// Top right-singular vectors of each class (embeddings as rows, no further
/// centering). Each direction's largest-magnitude entry is made positive.
ConceptBasis extract_concepts(const Matrix& neg_deflated, const Matrix& pos_deflated, int k_neg,
                              int k_pos, const Vector& normal_mean);

/// I - P_toxic with P_toxic = B B^T over the negative directions.
struct ToxicProjector {
  Matrix basis;  // d x K, orthonormal columns

  int rank() const { return static_cast<int>(basis.cols()); }
  Matrix projector() const { return basis * basis.transpose(); }
  Matrix complement() const {
    return Matrix::Identity(basis.rows(), basis.rows()) - projector();
  }
  Vector apply_complement(const Vector& x) const { return x - basis * (basis.transpose() * x); }
};

ToxicProjector build_toxic_projector(const ConceptBasis& basis);

}  // namespace calm
