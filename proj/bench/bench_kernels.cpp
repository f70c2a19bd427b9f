#include <random>

#include <benchmark/benchmark.h>

#include "calm/kernels.hpp"
#include "calm/suppression.hpp"

using namespace calm;

namespace {

Matrix gaussian(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

constexpr Index kDim = 256;

template <Matrix (*Kernel)(const Matrix&, const Vector&, const Matrix&)>
void affine(benchmark::State& state) {
  const Matrix m = gaussian(kDim, kDim, 1);
  const Vector b = gaussian(kDim, 1, 2).col(0);
  const Matrix x = gaussian(kDim, state.range(0), 3);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(m, b, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <Matrix (*Kernel)(const Matrix&, const Vector&)>
void covariance(benchmark::State& state) {
  const Matrix x = gaussian(kDim, state.range(0), 4);
  const Vector mean = x.rowwise().mean();
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(x, mean));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <Matrix (*Kernel)(const Matrix&, std::span<const Index>)>
void group_means(benchmark::State& state) {
  const Matrix x = gaussian(kDim, state.range(0), 5);
  std::vector<Index> offsets;
  for (Index n = 0; n < x.cols(); n += 8) offsets.push_back(n);
  offsets.push_back(x.cols());
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(x, offsets));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <Matrix (*Kernel)(const Matrix&, const Vector&)>
void project_out(benchmark::State& state) {
  const Matrix x = gaussian(kDim, state.range(0), 6);
  const Vector dir = gaussian(kDim, 1, 7).col(0).normalized();
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(x, dir));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

// Single-vector hook cost against the bare d x d product it wraps.
void apply_single(benchmark::State& state) {
  const Index d = state.range(0);
  CalmTransform dense = identity_transform(d);
  dense.composed = gaussian(d, d, 8);
  const Vector x = gaussian(d, 1, 9).col(0);
  for (auto _ : state) benchmark::DoNotOptimize(dense.apply(x));
}

void bare_matvec(benchmark::State& state) {
  const Index d = state.range(0);
  const Matrix m = gaussian(d, d, 8);
  const Vector x = gaussian(d, 1, 9).col(0);
  Vector y(d);
  for (auto _ : state) {
    y.noalias() = m * x;
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(affine<kernels::serial::affine>)->Name("affine/serial")->Arg(1024)->Arg(8192);
BENCHMARK(affine<kernels::parallel::affine>)->Name("affine/parallel")->Arg(1024)->Arg(8192);
BENCHMARK(covariance<kernels::serial::centered_covariance>)->Name("covariance/serial")->Arg(1024)->Arg(8192);
BENCHMARK(covariance<kernels::parallel::centered_covariance>)->Name("covariance/parallel")->Arg(1024)->Arg(8192);
BENCHMARK(group_means<kernels::serial::group_means>)->Name("group_means/serial")->Arg(8192);
BENCHMARK(group_means<kernels::parallel::group_means>)->Name("group_means/parallel")->Arg(8192);
BENCHMARK(project_out<kernels::serial::project_out>)->Name("project_out/serial")->Arg(8192);
BENCHMARK(project_out<kernels::parallel::project_out>)->Name("project_out/parallel")->Arg(8192);
BENCHMARK(apply_single)->Arg(256)->Arg(1024);
BENCHMARK(bare_matvec)->Arg(256)->Arg(1024);

BENCHMARK_MAIN();
