// Serial reference kernels against the OpenMP versions.
//   ./bench_kernels --benchmark_filter=conv
// OMP_NUM_THREADS controls the parallel side.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "manifest/kernels.hpp"

namespace k = manifest::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_vec(std::size_t(n) * n, 1), b = random_vec(std::size_t(n) * n, 2);
  std::vector<float> c(std::size_t(n) * n);
  for (auto _ : state) {
    if (Parallel)
      k::parallel::gemm(false, false, n, n, n, a.data(), n, b.data(), n, c.data(), n, false);
    else
      k::reference::gemm(false, false, n, n, n, a.data(), n, b.data(), n, c.data(), n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

// A residual-block sized convolution: 64 channels at 16x16, 3x3.
k::ConvGeometry conv_geometry(int channels) {
  k::ConvGeometry g;
  g.batch = 2;
  g.in_channels = channels;
  g.out_channels = channels;
  g.height = 16;
  g.width = 16;
  g.kernel = 3;
  g.pad = 1;
  return g;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto g = conv_geometry(static_cast<int>(state.range(0)));
  const auto x = random_vec(std::size_t(g.batch) * g.in_channels * g.height * g.width, 3);
  const auto w = random_vec(std::size_t(g.out_channels) * g.in_channels * g.kernel * g.kernel, 4);
  const auto bias = random_vec(g.out_channels, 5);
  std::vector<float> y(std::size_t(g.batch) * g.out_channels * g.out_height() * g.out_width());
  for (auto _ : state) {
    if (Parallel)
      k::parallel::conv2d_forward(g, x.data(), w.data(), bias.data(), y.data());
    else
      k::reference::conv2d_forward(g, x.data(), w.data(), bias.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const auto g = conv_geometry(static_cast<int>(state.range(0)));
  const auto x = random_vec(std::size_t(g.batch) * g.in_channels * g.height * g.width, 6);
  const auto w = random_vec(std::size_t(g.out_channels) * g.in_channels * g.kernel * g.kernel, 7);
  const auto dy = random_vec(std::size_t(g.batch) * g.out_channels * g.out_height() * g.out_width(), 8);
  std::vector<float> dx(x.size()), dw(w.size()), db(g.out_channels);
  for (auto _ : state) {
    if (Parallel)
      k::parallel::conv2d_backward(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
    else
      k::reference::conv2d_backward(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

template <bool Parallel>
void BM_GroupNorm(benchmark::State& state) {
  const int groups = 128, size = static_cast<int>(state.range(0));
  const auto x = random_vec(std::size_t(groups) * size, 9);
  const auto gamma = random_vec(groups, 10), beta = random_vec(groups, 11);
  std::vector<float> mean(groups), sd(groups), y(x.size());
  for (auto _ : state) {
    if (Parallel) {
      k::parallel::group_moments(groups, size, x.data(), mean.data(), sd.data());
      k::parallel::group_normalize_affine(groups, size, x.data(), mean.data(), sd.data(), gamma.data(), beta.data(),
                                          1e-5f, y.data());
    } else {
      k::reference::group_moments(groups, size, x.data(), mean.data(), sd.data());
      k::reference::group_normalize_affine(groups, size, x.data(), mean.data(), sd.data(), gamma.data(), beta.data(),
                                           1e-5f, y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->Arg(16)->Arg(64);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Arg(16)->Arg(64);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/reference")->Arg(16)->Arg(64);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/parallel")->Arg(16)->Arg(64);
BENCHMARK(BM_GroupNorm<false>)->Name("group_norm/reference")->Arg(256)->Arg(4096);
BENCHMARK(BM_GroupNorm<true>)->Name("group_norm/parallel")->Arg(256)->Arg(4096);

BENCHMARK_MAIN();
