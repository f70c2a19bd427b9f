#include "calm/concepts.hpp"

#include <cmath>
#include <exception>
#include <sstream>

#include <Eigen/SVD>

#include "calm/error.hpp"
#include "calm/kernels.hpp"

namespace calm {

namespace {

const char* const kModule = "concepts";

constexpr double kRankTolerance = 1e-10;
constexpr double kDegeneracyTolerance = 1e-9;

struct ClassConcepts {
  Matrix directions;
  Vector singular_values;
  std::string warning;
};

ClassConcepts top_directions(const Matrix& batch, int k, const char* label) {
  if (batch.cols() < k) {
    std::ostringstream msg;
    msg << label << " class has " << batch.cols() << " embeddings, fewer than K = " << k;
    throw Error(kModule, msg.str());
  }
  if (!batch.allFinite()) throw Error(kModule, std::string(label) + " class contains non-finite values");

  // Columns of `batch` are the embeddings, so the right singular vectors of
  // the row-oriented matrix are the left singular vectors here.
  Eigen::BDCSVD<Matrix> svd(batch, Eigen::ComputeThinU);
  const Vector& sigma = svd.singularValues();
  if (sigma.size() < k || !(sigma(0) > 0.0) || sigma(k - 1) <= kRankTolerance * sigma(0)) {
    std::ostringstream msg;
    msg << "K = " << k << " exceeds the numerical rank of the " << label << " class";
    throw Error(kModule, msg.str());
  }

  ClassConcepts out;
  out.directions = svd.matrixU().leftCols(k);
  fix_column_signs(out.directions);
  out.singular_values = sigma.head(k);
  if (sigma.size() > k && std::abs(sigma(k - 1) - sigma(k)) <= kDegeneracyTolerance * sigma(k - 1)) {
    std::ostringstream msg;
    msg << label << " spectrum is degenerate at the K boundary (sigma_" << k << " = " << sigma(k - 1)
        << ", sigma_" << k + 1 << " = " << sigma(k) << ")";
    out.warning = msg.str();
  }
  return out;
}

}  // namespace

Matrix project_out_mean(const Matrix& whitened_class, const Vector& normal_mean) {
  if (whitened_class.rows() != normal_mean.size())
    throw Error(kModule, "dimension mismatch between batch and normal mean");
  if (!(normal_mean.norm() > 0.0)) throw Error(kModule, "normal mean direction is zero");
  return kernels::parallel::project_out(whitened_class, normal_mean);
}

ConceptBasis extract_concepts(const Matrix& neg_deflated, const Matrix& pos_deflated, int k_neg,
                              int k_pos, const Vector& normal_mean) {
  if (k_neg < 1 || k_pos < 1) throw Error(kModule, "K must be at least 1 per class");
  const Index d = neg_deflated.rows();
  if (pos_deflated.rows() != d) throw Error(kModule, "class batches disagree on dimension");
  if (k_neg + k_pos > d) throw Error(kModule, "2K exceeds the embedding dimension");

  ClassConcepts neg;
  ClassConcepts pos;
  // The two SVDs are independent; failures are carried out of the region.
  std::exception_ptr failure[2];
#pragma omp parallel sections
  {
#pragma omp section
    {
      try {
        neg = top_directions(neg_deflated, k_neg, "negative");
      } catch (...) {
        failure[0] = std::current_exception();
      }
    }
#pragma omp section
    {
      try {
        pos = top_directions(pos_deflated, k_pos, "positive");
      } catch (...) {
        failure[1] = std::current_exception();
      }
    }
  }
  for (const auto& f : failure)
    if (f) std::rethrow_exception(f);

  ConceptBasis basis;
  basis.k_neg = k_neg;
  basis.k_pos = k_pos;
  basis.normal_mean = normal_mean;
  basis.directions.resize(d, k_neg + k_pos);
  basis.directions << neg.directions, pos.directions;
  basis.singular_values.resize(k_neg + k_pos);
  basis.singular_values << neg.singular_values, pos.singular_values;
  for (const auto* c : {&neg, &pos})
    if (!c->warning.empty()) basis.warnings.push_back(c->warning);
  return basis;
}

ToxicProjector build_toxic_projector(const ConceptBasis& basis) {
  if (basis.k_neg < 1) throw Error(kModule, "toxic projector needs at least one negative direction");
  return ToxicProjector{basis.negative()};
}

}  // namespace calm
