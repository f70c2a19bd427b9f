#include <vector>

#include "calm/kernels.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace calm;
namespace serial = calm::kernels::serial;
namespace parallel = calm::kernels::parallel;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("serial affine matches an explicit triple loop") {
  const Matrix m = test::gaussian(5, 5, 1);
  const Vector b = test::gaussian(5, 1, 2).col(0);
  const Matrix x = test::gaussian(5, 7, 3);
  const Matrix y = serial::affine(m, b, x);
  for (Index n = 0; n < 7; ++n)
    for (Index i = 0; i < 5; ++i) {
      double acc = b(i);
      for (Index k = 0; k < 5; ++k) acc += m(i, k) * x(k, n);
      CHECK(y(i, n) == doctest::Approx(acc).epsilon(1e-14));
    }
}

TEST_CASE("parallel kernels agree with serial references across block boundaries") {
  for (Index n : {1, 63, 64, 65, 200}) {
    CAPTURE(n);
    const Matrix x = test::gaussian(9, n, 10 + static_cast<std::uint64_t>(n));
    const Matrix m = test::gaussian(9, 9, 4);
    const Vector b = test::gaussian(9, 1, 5).col(0);
    CHECK(max_abs_diff(serial::affine(m, b, x), parallel::affine(m, b, x)) < 1e-12);

    const Vector mean = serial::column_mean(x);
    CHECK(max_abs_diff(mean, parallel::column_mean(x)) < 1e-13);
    CHECK(max_abs_diff(serial::centered_covariance(x, mean), parallel::centered_covariance(x, mean)) < 1e-12);

    const Vector dir = test::gaussian(9, 1, 6).col(0).normalized();
    CHECK(max_abs_diff(serial::project_out(x, dir), parallel::project_out(x, dir)) < 1e-13);

    std::vector<Index> offsets{0};
    for (Index start = 0; start < n;) {
      start = std::min(n, start + 1 + start % 3);
      offsets.push_back(start);
    }
    CHECK(max_abs_diff(serial::group_means(x, offsets), parallel::group_means(x, offsets)) < 1e-13);
  }
}

TEST_CASE("centered covariance uses 1/N normalisation") {
  Matrix x(1, 4);
  x << 1, 2, 3, 6;
  const Vector mean = serial::column_mean(x);
  CHECK(mean(0) == doctest::Approx(3.0));
  // deviations -2,-1,0,3 -> squares sum 14
  CHECK(serial::centered_covariance(x, mean)(0, 0) == doctest::Approx(14.0 / 4.0));
  CHECK(parallel::centered_covariance(x, mean)(0, 0) == doctest::Approx(14.0 / 4.0));
}

TEST_CASE("project_out removes the direction and is idempotent") {
  const Matrix x = test::gaussian(6, 30, 7);
  const Vector dir = test::gaussian(6, 1, 8).col(0).normalized();
  const Matrix once = parallel::project_out(x, dir);
  CHECK((dir.transpose() * once).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(max_abs_diff(once, parallel::project_out(once, dir)) < 1e-13);
}

TEST_CASE("parallel kernels are deterministic") {
  const Matrix x = test::gaussian(16, 300, 9);
  const Vector mean = parallel::column_mean(x);
  const Matrix a = parallel::centered_covariance(x, mean);
  const Matrix b = parallel::centered_covariance(x, mean);
  CHECK(a == b);
}
