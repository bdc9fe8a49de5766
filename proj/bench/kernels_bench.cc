// Copyright 2026 The mtkd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Serial reference kernels against their OpenMP variants, at the shapes the
// desk-scale student produces (64-wide encoder, 128-wide feed-forward).

#include <benchmark/benchmark.h>

#include <vector>

#include "mtkd/kernels.h"
#include "mtkd/rng.h"

namespace {

using namespace mtkd;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <void (*Gemm)(const kernels::GemmArgs&)>
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = random_values(m * k, 1), b = random_values(k * n, 2);
  std::vector<double> c(m * n);
  kernels::GemmArgs args{a, b, c, m, k, n};
  for (auto _ : state) {
    Gemm(args);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}

void gemm_shapes(benchmark::internal::Benchmark* b) {
  b->Args({16, 64, 64})->Args({16, 64, 128})->Args({64, 64, 64})->Args({256, 256, 256});
}

BENCHMARK(BM_Gemm<kernels::gemm_serial>)->Name("gemm/serial")->Apply(gemm_shapes);
BENCHMARK(BM_Gemm<kernels::gemm_omp>)->Name("gemm/omp")->Apply(gemm_shapes);

using ConvFn = void (*)(const kernels::ConvArgs&, std::span<const double>, std::span<const double>, std::span<double>);

template <ConvFn Conv>
void BM_ConvForward(benchmark::State& state) {
  kernels::ConvArgs s;
  s.t_in = static_cast<std::size_t>(state.range(0));
  s.d_in = static_cast<std::size_t>(state.range(1));
  s.d_out = 64;
  s.width = 3;
  s.stride = 2;
  const auto x = random_values(s.t_in * s.d_in, 3), w = random_values(s.width * s.d_in * s.d_out, 4);
  std::vector<double> y(s.t_out() * s.d_out);
  for (auto _ : state) {
    Conv(s, x, w, y);
    benchmark::DoNotOptimize(y.data());
    benchmark::ClobberMemory();
  }
}

BENCHMARK(BM_ConvForward<kernels::conv1d_forward_serial>)->Name("conv1d_forward/serial")->Args({64, 80})->Args({512, 80});
BENCHMARK(BM_ConvForward<kernels::conv1d_forward_omp>)->Name("conv1d_forward/omp")->Args({64, 80})->Args({512, 80});

template <ConvFn Conv>
void BM_ConvBackwardKernel(benchmark::State& state) {
  kernels::ConvArgs s;
  s.t_in = static_cast<std::size_t>(state.range(0));
  s.d_in = 80;
  s.d_out = 64;
  s.width = 3;
  s.stride = 2;
  const auto x = random_values(s.t_in * s.d_in, 5), dy = random_values(s.t_out() * s.d_out, 6);
  std::vector<double> dk(s.width * s.d_in * s.d_out);
  for (auto _ : state) {
    Conv(s, x, dy, dk);
    benchmark::DoNotOptimize(dk.data());
    benchmark::ClobberMemory();
  }
}

BENCHMARK(BM_ConvBackwardKernel<kernels::conv1d_backward_kernel_serial>)->Name("conv1d_backward_kernel/serial")->Arg(512);
BENCHMARK(BM_ConvBackwardKernel<kernels::conv1d_backward_kernel_omp>)->Name("conv1d_backward_kernel/omp")->Arg(512);

}  // namespace

BENCHMARK_MAIN();
