#include "calm/concepts.hpp"
#include "calm/error.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace calm;

namespace {

// Eigenvectors of the Gram matrix B B^T, descending, as an SVD-free oracle.
Matrix gram_eigenvectors(const Matrix& batch, int k) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(batch * batch.transpose());
  Matrix u = es.eigenvectors().rowwise().reverse().leftCols(k);
  return u;
}

Matrix low_rank_batch(Index d, Index n, int rank, std::uint64_t seed) {
  const Matrix basis = test::random_orthonormal(d, rank, seed);
  Matrix coeffs = test::gaussian(rank, n, seed + 1);
  for (int r = 0; r < rank; ++r) coeffs.row(r) *= static_cast<double>(rank - r + 1);
  return basis * coeffs;
}

}  // namespace

TEST_CASE("project_out_mean removes the normal mean direction") {
  const Matrix x = test::gaussian(5, 20, 1);
  const Vector mu = test::gaussian(5, 1, 2).col(0) * 3.0;
  const Matrix y = project_out_mean(x, mu);
  CHECK((mu.transpose() * y).cwiseAbs().maxCoeff() < 1e-12);
  // components orthogonal to mu are untouched
  const Vector w = Vector::Unit(5, 0) - mu.normalized() * mu.normalized()(0);
  CHECK(((w.transpose() * y) - (w.transpose() * x)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(project_out_mean(x, Vector::Zero(5)), Error);
}

TEST_CASE("concept directions match the Gram eigenvector oracle") {
  const Matrix neg = test::gaussian(7, 40, 3) + low_rank_batch(7, 40, 2, 4) * 3.0;
  const Matrix pos = test::gaussian(7, 30, 5) + low_rank_batch(7, 30, 1, 6) * 4.0;
  const ConceptBasis b = extract_concepts(neg, pos, 2, 1, Vector::Ones(7));
  REQUIRE(b.directions.cols() == 3);

  const Matrix neg_oracle = gram_eigenvectors(neg, 2);
  const Matrix pos_oracle = gram_eigenvectors(pos, 1);
  for (int j = 0; j < 2; ++j) CHECK(std::abs(b.negative().col(j).dot(neg_oracle.col(j))) == doctest::Approx(1.0));
  CHECK(std::abs(b.positive().col(0).dot(pos_oracle.col(0))) == doctest::Approx(1.0));

  Eigen::JacobiSVD<Matrix> full(neg);
  CHECK(b.singular_values(0) == doctest::Approx(full.singularValues()(0)));
  CHECK(b.singular_values(1) == doctest::Approx(full.singularValues()(1)));
  CHECK(b.singular_values(0) >= b.singular_values(1));

  CHECK((b.negative().transpose() * b.negative() - Matrix::Identity(2, 2)).norm() < 1e-12);
  for (Index j = 0; j < 3; ++j) {
    Index arg;
    b.directions.col(j).cwiseAbs().maxCoeff(&arg);
    CHECK(b.directions(arg, j) > 0.0);
  }
}

TEST_CASE("concepts are invariant to the order of embeddings") {
  const Matrix neg = test::gaussian(6, 25, 7) + low_rank_batch(6, 25, 1, 8) * 3.0;
  const Matrix pos = test::gaussian(6, 25, 9);
  const ConceptBasis a = extract_concepts(neg, pos, 1, 1, Vector::Ones(6));
  const ConceptBasis b = extract_concepts(neg.rowwise().reverse(), pos, 1, 1, Vector::Ones(6));
  CHECK((a.directions - b.directions).norm() < 1e-10);
}

TEST_CASE("rank deficiency is an error naming the class") {
  const Matrix neg = low_rank_batch(6, 20, 1, 10);
  const Matrix pos = test::gaussian(6, 20, 11);
  try {
    extract_concepts(neg, pos, 2, 1, Vector::Ones(6));
    FAIL("expected a rank error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("negative") != std::string::npos);
  }
  CHECK_THROWS_AS(extract_concepts(pos, low_rank_batch(6, 20, 1, 12), 1, 3, Vector::Ones(6)), Error);
  CHECK_THROWS_AS(extract_concepts(pos, pos, 0, 1, Vector::Ones(6)), Error);
  CHECK_THROWS_AS(extract_concepts(pos, pos, 4, 3, Vector::Ones(6)), Error);
}

TEST_CASE("degenerate spectrum at the K boundary warns but proceeds") {
  // Two orthogonal directions with identical energy.
  Matrix neg = Matrix::Zero(4, 4);
  neg(0, 0) = 2.0;
  neg(0, 1) = -2.0;
  neg(1, 2) = 2.0;
  neg(1, 3) = -2.0;
  const Matrix pos = test::gaussian(4, 10, 13);
  const ConceptBasis b = extract_concepts(neg, pos, 1, 1, Vector::Ones(4));
  REQUIRE(b.warnings.size() == 1);
  CHECK(b.warnings[0].find("degenerate") != std::string::npos);
}

TEST_CASE("toxic projector is an orthogonal projector of rank K") {
  const Matrix neg = test::gaussian(8, 30, 14) + low_rank_batch(8, 30, 3, 15) * 3.0;
  const ConceptBasis b = extract_concepts(neg, test::gaussian(8, 30, 16), 3, 1, Vector::Ones(8));
  const ToxicProjector t = build_toxic_projector(b);
  const Matrix p = t.projector();
  CHECK((p * p - p).norm() < 1e-12);
  CHECK((p - p.transpose()).norm() < 1e-12);
  CHECK(p.trace() == doctest::Approx(3.0));
  const Vector x = test::gaussian(8, 1, 17).col(0);
  CHECK((t.apply_complement(x) - t.complement() * x).norm() < 1e-12);
}
