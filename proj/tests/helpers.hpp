#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "calm/linalg.hpp"

namespace calm::test {

inline Matrix gaussian(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

/// Data with an anisotropic, correlated covariance and nonzero mean.
inline Matrix correlated(Index d, Index n, std::uint64_t seed) {
  Matrix mix = gaussian(d, d, seed + 1);
  for (Index i = 0; i < d; ++i) mix.col(i) *= 0.5 + static_cast<double>(i % 5);
  Matrix x = mix * gaussian(d, n, seed);
  x.colwise() += gaussian(d, 1, seed + 2).col(0) * 3.0;
  return x;
}

inline Matrix random_orthonormal(Index d, Index k, std::uint64_t seed) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(d, d, seed));
  return Matrix(qr.householderQ()).leftCols(k);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("calm_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace calm::test
