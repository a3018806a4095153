// OpenMP kernels against the serial reference. Arg is the thread count for
// the parallel variants.

#include <benchmark/benchmark.h>

#include <random>

#include "tfnet/kernels.hpp"
#include "tfnet/reference.hpp"
#include "tfnet/tensor.hpp"

using namespace tfnet;

namespace {

Tensor random_tensor(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Grouped 3x3x3 convolution of the micro time backbone's second stage.
const kernels::ConvGeometry kConv3d{{3, 3, 3}, {1, 1, 1}, {1, 1, 1}, 4};
const Shape kConv3dInput{32, 8, 16, 16};
const Shape kConv3dWeights{32, 8, 3, 3, 3};

// 3x3 convolution of the micro frequency backbone's first stage.
const kernels::ConvGeometry kConv2d{{1, 3, 3}, {1, 1, 1}, {0, 1, 1}, 1};
const Shape kConv2dInput{64, 1, 28, 28};
const Shape kConv2dWeights{16, 64, 1, 3, 3};

void BM_Conv3dKernel(benchmark::State& state) {
  kernels::set_num_threads(static_cast<int>(state.range(0)));
  const Tensor x = random_tensor(kConv3dInput, 1), w = random_tensor(kConv3dWeights, 2), b = random_tensor({32}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv_forward(x, w, b, kConv3d));
}
BENCHMARK(BM_Conv3dKernel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Conv3dReference(benchmark::State& state) {
  const Tensor x = random_tensor(kConv3dInput, 1), w = random_tensor(kConv3dWeights, 2), b = random_tensor({32}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(reference::conv_forward(x, w, b, kConv3d));
}
BENCHMARK(BM_Conv3dReference)->Unit(benchmark::kMillisecond);

void BM_Conv2dKernel(benchmark::State& state) {
  kernels::set_num_threads(static_cast<int>(state.range(0)));
  const Tensor x = random_tensor(kConv2dInput, 4), w = random_tensor(kConv2dWeights, 5), b = random_tensor({16}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv_forward(x, w, b, kConv2d));
}
BENCHMARK(BM_Conv2dKernel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Conv2dReference(benchmark::State& state) {
  const Tensor x = random_tensor(kConv2dInput, 4), w = random_tensor(kConv2dWeights, 5), b = random_tensor({16}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(reference::conv_forward(x, w, b, kConv2d));
}
BENCHMARK(BM_Conv2dReference)->Unit(benchmark::kMillisecond);

void BM_Conv3dBackwardKernel(benchmark::State& state) {
  kernels::set_num_threads(static_cast<int>(state.range(0)));
  const Tensor x = random_tensor(kConv3dInput, 1), w = random_tensor(kConv3dWeights, 2);
  const Tensor g = random_tensor(kernels::conv_output_shape(kConv3dInput, kConv3dWeights, kConv3d), 7);
  Tensor gw(kConv3dWeights), gb({32});
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::conv_backward_input(g, w, kConv3dInput, kConv3d));
    kernels::conv_backward_params(g, x, kConv3d, gw, gb);
  }
}
BENCHMARK(BM_Conv3dBackwardKernel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Conv3dBackwardReference(benchmark::State& state) {
  const Tensor x = random_tensor(kConv3dInput, 1), w = random_tensor(kConv3dWeights, 2);
  const Tensor g = random_tensor(kernels::conv_output_shape(kConv3dInput, kConv3dWeights, kConv3d), 7);
  Tensor gw(kConv3dWeights), gb({32});
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::conv_backward_input(g, w, kConv3dInput, kConv3d));
    reference::conv_backward_params(g, x, kConv3d, gw, gb);
  }
}
BENCHMARK(BM_Conv3dBackwardReference)->Unit(benchmark::kMillisecond);

void BM_MatmulKernel(benchmark::State& state) {
  kernels::set_num_threads(static_cast<int>(state.range(0)));
  const Tensor a = random_tensor({128, 196}, 8), b = random_tensor({196, 128}, 9);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(BM_MatmulKernel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMicrosecond);

void BM_MatmulReference(benchmark::State& state) {
  const Tensor a = random_tensor({128, 196}, 8), b = random_tensor({196, 128}, 9);
  for (auto _ : state) benchmark::DoNotOptimize(reference::matmul(a, b));
}
BENCHMARK(BM_MatmulReference)->Unit(benchmark::kMicrosecond);

void BM_MaxPool3dKernel(benchmark::State& state) {
  kernels::set_num_threads(static_cast<int>(state.range(0)));
  const Tensor x = random_tensor({16, 16, 32, 32}, 10);
  const kernels::PoolGeometry g{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}};
  for (auto _ : state) benchmark::DoNotOptimize(kernels::maxpool_forward(x, g));
}
BENCHMARK(BM_MaxPool3dKernel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMicrosecond);

void BM_MaxPool3dReference(benchmark::State& state) {
  const Tensor x = random_tensor({16, 16, 32, 32}, 10);
  const kernels::PoolGeometry g{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}};
  for (auto _ : state) benchmark::DoNotOptimize(reference::maxpool_forward(x, g));
}
BENCHMARK(BM_MaxPool3dReference)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
