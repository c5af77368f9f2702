// Parallel kernels against their serial references. Thread count follows
// OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "acsseg/kernels.hpp"
#include "acsseg/kernels_ref.hpp"

namespace k = acsseg::kernels;

namespace {

std::vector<float> noise(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = noise(n * n, 1), b = noise(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::gemm(k::Trans::No, k::Trans::No, n, n, n, 1.0f, a.data(), n, b.data(), n, 0.0f, c.data(), n);
    else
      k::ref::gemm(k::Trans::No, k::Trans::No, n, n, n, 1.0f, a.data(), n, b.data(), n, 0.0f, c.data(), n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * static_cast<std::int64_t>(n * n * n));
}

k::ConvGeometry conv_geometry(std::size_t channels, std::size_t side) {
  k::ConvGeometry g;
  g.in_channels = g.out_channels = channels;
  g.in_h = g.in_w = side;
  g.kernel = 3;
  g.pad = 1;
  return g;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const std::size_t batch = 2;
  const auto x = noise(batch * g.in_channels * g.in_h * g.in_w, 3);
  const auto w = noise(g.out_channels * g.col_rows(), 4);
  const auto bias = noise(g.out_channels, 5);
  std::vector<float> y(batch * g.out_channels * g.out_h() * g.out_w());
  for (auto _ : state) {
    if constexpr (Parallel)
      k::conv2d_forward(x.data(), w.data(), bias.data(), batch, g, y.data());
    else
      k::ref::conv2d_forward(x.data(), w.data(), bias.data(), batch, g, y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const std::size_t batch = 2;
  const auto x = noise(batch * g.in_channels * g.in_h * g.in_w, 6);
  const auto w = noise(g.out_channels * g.col_rows(), 7);
  const auto dy = noise(batch * g.out_channels * g.out_h() * g.out_w(), 8);
  std::vector<float> dx(x.size()), dw(w.size()), db(g.out_channels);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::conv2d_backward(x.data(), w.data(), dy.data(), batch, g, dx.data(), dw.data(), db.data());
    else
      k::ref::conv2d_backward(x.data(), w.data(), dy.data(), batch, g, dx.data(), dw.data(), db.data());
    benchmark::DoNotOptimize(dx.data());
  }
}

template <bool Parallel>
void BM_Attention(benchmark::State& state) {
  k::AttentionGeometry g;
  g.embed = 16;
  g.value_channels = 32;
  g.positions = static_cast<std::size_t>(state.range(0));
  const std::size_t batch = 2;
  const auto q = noise(batch * g.embed * g.positions, 9), key = noise(batch * g.embed * g.positions, 10);
  const auto v = noise(batch * g.value_channels * g.positions, 11);
  std::vector<float> out(v.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      k::attention_forward(q.data(), key.data(), v.data(), batch, g, out.data());
    else
      k::ref::attention_forward(q.data(), key.data(), v.data(), batch, g, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Bilinear(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const std::size_t planes = 32;
  const auto x = noise(planes * side * side, 12);
  std::vector<float> y(planes * 4 * side * side);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::bilinear_resize(x.data(), planes, side, side, 2 * side, 2 * side, y.data());
    else
      k::ref::bilinear_resize(x.data(), planes, side, side, 2 * side, 2 * side, y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/ref")->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/omp")->Arg(128)->Arg(256);
BENCHMARK(BM_ConvForward<false>)->Name("conv_fwd/ref")->Args({32, 56});
BENCHMARK(BM_ConvForward<true>)->Name("conv_fwd/omp")->Args({32, 56});
BENCHMARK(BM_ConvBackward<false>)->Name("conv_bwd/ref")->Args({32, 56});
BENCHMARK(BM_ConvBackward<true>)->Name("conv_bwd/omp")->Args({32, 56});
BENCHMARK(BM_Attention<false>)->Name("attention/ref")->Arg(196)->Arg(784);
BENCHMARK(BM_Attention<true>)->Name("attention/omp")->Arg(196)->Arg(784);
BENCHMARK(BM_Bilinear<false>)->Name("bilinear/ref")->Arg(56);
BENCHMARK(BM_Bilinear<true>)->Name("bilinear/omp")->Arg(56);

BENCHMARK_MAIN();
