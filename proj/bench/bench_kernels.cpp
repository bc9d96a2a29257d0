#include <benchmark/benchmark.h>

#include <vector>

#include "mbrbf/kernels.hpp"
#include "mbrbf/rng.hpp"

namespace k = mbrbf::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  mbrbf::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// 1x1 reduction of a C x 7 x 7 block to 16 maps.
template <bool Parallel>
void BM_ChannelMix(benchmark::State& state) {
  const k::MixDims d{16, static_cast<std::size_t>(state.range(0)), 49};
  const auto w = random_values(d.rows * d.inner, 1);
  const auto bias = random_values(d.rows, 2);
  const auto in = random_values(d.inner * d.cols, 3);
  std::vector<double> out(d.rows * d.cols);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::channel_mix(w, bias, in, out, d);
    } else {
      k::serial::channel_mix(w, bias, in, out, d);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.rows * d.inner * d.cols));
}

template <bool Parallel>
void BM_SqDistances(benchmark::State& state) {
  const std::size_t units = static_cast<std::size_t>(state.range(0)), dim = 49;
  const auto centers = random_values(units * dim, 4);
  const auto x = random_values(dim, 5);
  std::vector<double> out(units);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::sq_distances(centers, x, out);
    } else {
      k::serial::sq_distances(centers, x, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

// First backbone block on a 48 x 48 image, then a deeper 24 x 24 block.
template <bool Parallel>
void BM_Conv2d(benchmark::State& state) {
  const auto in_ch = static_cast<std::size_t>(state.range(0));
  const auto side = static_cast<std::size_t>(state.range(1));
  const k::ConvDims d{in_ch, 2 * in_ch > 16 ? 2 * in_ch : 16, side, side, 3};
  const auto in = random_values(d.in_channels * side * side, 6);
  const auto w = random_values(d.out_channels * d.in_channels * 9, 7);
  const auto bias = random_values(d.out_channels, 8);
  std::vector<double> out(d.out_channels * side * side);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::conv2d_same(in, w, bias, out, d);
    } else {
      k::serial::conv2d_same(in, w, bias, out, d);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Conv2dBackward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const k::ConvDims d{16, 32, side, side, 3};
  const auto in = random_values(d.in_channels * side * side, 9);
  const auto w = random_values(d.out_channels * d.in_channels * 9, 10);
  const auto go = random_values(d.out_channels * side * side, 11);
  std::vector<double> gi(in.size()), gw(w.size()), gb(d.out_channels);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::conv2d_same_backward(in, w, go, gi, gw, gb, d);
    } else {
      k::serial::conv2d_same_backward(in, w, go, gi, gw, gb, d);
    }
    benchmark::DoNotOptimize(gw.data());
  }
}

}  // namespace

BENCHMARK(BM_ChannelMix<false>)->Name("channel_mix/serial")->Arg(64)->Arg(512);
BENCHMARK(BM_ChannelMix<true>)->Name("channel_mix/parallel")->Arg(64)->Arg(512);
BENCHMARK(BM_SqDistances<false>)->Name("sq_distances/serial")->Arg(32)->Arg(4096);
BENCHMARK(BM_SqDistances<true>)->Name("sq_distances/parallel")->Arg(32)->Arg(4096);
BENCHMARK(BM_Conv2d<false>)->Name("conv2d/serial")->Args({1, 48})->Args({16, 24});
BENCHMARK(BM_Conv2d<true>)->Name("conv2d/parallel")->Args({1, 48})->Args({16, 24});
BENCHMARK(BM_Conv2dBackward<false>)->Name("conv2d_backward/serial")->Arg(24);
BENCHMARK(BM_Conv2dBackward<true>)->Name("conv2d_backward/parallel")->Arg(24);

BENCHMARK_MAIN();
