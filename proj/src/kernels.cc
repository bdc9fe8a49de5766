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

#include "mtkd/kernels.h"

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mtkd::kernels {
namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1 << 16;

inline double a_at(const GemmArgs& g, std::size_t i, std::size_t p) {
  return g.trans_a ? g.a[p * g.m + i] : g.a[i * g.k + p];
}

void gemm_row(const GemmArgs& g, std::size_t i) {
  double* c = g.c.data() + i * g.n;
  if (!g.accumulate) {
    for (std::size_t j = 0; j < g.n; ++j) c[j] = 0.0;
  }
  if (!g.trans_b) {
    for (std::size_t p = 0; p < g.k; ++p) {
      const double a = a_at(g, i, p);
      if (a == 0.0) continue;
      const double* b = g.b.data() + p * g.n;
      for (std::size_t j = 0; j < g.n; ++j) c[j] += a * b[j];
    }
  } else {
    for (std::size_t j = 0; j < g.n; ++j) {
      const double* b = g.b.data() + j * g.k;
      double acc = 0.0;
      for (std::size_t p = 0; p < g.k; ++p) acc += a_at(g, i, p) * b[p];
      c[j] += acc;
    }
  }
}

void conv_forward_row(const ConvArgs& s, std::span<const double> x,
                      std::span<const double> kernel, std::span<double> y, std::size_t t) {
  double* out = y.data() + t * s.d_out;
  for (std::size_t o = 0; o < s.d_out; ++o) out[o] = 0.0;
  for (std::size_t w = 0; w < s.width; ++w) {
    const double* in = x.data() + (t * s.stride + w) * s.d_in;
    const double* kw = kernel.data() + w * s.d_in * s.d_out;
    for (std::size_t i = 0; i < s.d_in; ++i) {
      const double v = in[i];
      if (v == 0.0) continue;
      const double* krow = kw + i * s.d_out;
      for (std::size_t o = 0; o < s.d_out; ++o) out[o] += v * krow[o];
    }
  }
}

void conv_backward_input_row(const ConvArgs& s, std::span<const double> dy,
                             std::span<const double> kernel, std::span<double> dx,
                             std::size_t r) {
  const std::size_t t_out = s.t_out();
  double* g = dx.data() + r * s.d_in;
  for (std::size_t w = 0; w < s.width && w <= r; ++w) {
    const std::size_t shifted = r - w;
    if (shifted % s.stride != 0) continue;
    const std::size_t t = shifted / s.stride;
    if (t >= t_out) continue;
    const double* go = dy.data() + t * s.d_out;
    const double* kw = kernel.data() + w * s.d_in * s.d_out;
    for (std::size_t i = 0; i < s.d_in; ++i) {
      const double* krow = kw + i * s.d_out;
      double acc = 0.0;
      for (std::size_t o = 0; o < s.d_out; ++o) acc += go[o] * krow[o];
      g[i] += acc;
    }
  }
}

// One (w, i) row of the kernel gradient.
void conv_backward_kernel_row(const ConvArgs& s, std::span<const double> x,
                              std::span<const double> dy, std::span<double> dk,
                              std::size_t wi) {
  const std::size_t w = wi / s.d_in;
  const std::size_t i = wi % s.d_in;
  double* g = dk.data() + wi * s.d_out;
  const std::size_t t_out = s.t_out();
  for (std::size_t t = 0; t < t_out; ++t) {
    const double v = x[(t * s.stride + w) * s.d_in + i];
    if (v == 0.0) continue;
    const double* go = dy.data() + t * s.d_out;
    for (std::size_t o = 0; o < s.d_out; ++o) g[o] += v * go[o];
  }
}

bool worth_parallel(std::size_t work) { return work >= kParallelWork && max_threads() > 1; }

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm_serial(const GemmArgs& args) {
  for (std::size_t i = 0; i < args.m; ++i) gemm_row(args, i);
}

void gemm_omp(const GemmArgs& args) {
  const auto m = static_cast<std::int64_t>(args.m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) gemm_row(args, static_cast<std::size_t>(i));
}

void gemm(const GemmArgs& args) {
  if (worth_parallel(args.m * args.n * args.k)) {
    gemm_omp(args);
  } else {
    gemm_serial(args);
  }
}

void conv1d_forward_serial(const ConvArgs& s, std::span<const double> x,
                           std::span<const double> kernel, std::span<double> y) {
  for (std::size_t t = 0; t < s.t_out(); ++t) conv_forward_row(s, x, kernel, y, t);
}

void conv1d_forward_omp(const ConvArgs& s, std::span<const double> x,
                        std::span<const double> kernel, std::span<double> y) {
  const auto t_out = static_cast<std::int64_t>(s.t_out());
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < t_out; ++t) {
    conv_forward_row(s, x, kernel, y, static_cast<std::size_t>(t));
  }
}

void conv1d_forward(const ConvArgs& s, std::span<const double> x,
                    std::span<const double> kernel, std::span<double> y) {
  if (worth_parallel(s.t_out() * s.width * s.d_in * s.d_out)) {
    conv1d_forward_omp(s, x, kernel, y);
  } else {
    conv1d_forward_serial(s, x, kernel, y);
  }
}

void conv1d_backward_input_serial(const ConvArgs& s, std::span<const double> dy,
                                  std::span<const double> kernel, std::span<double> dx) {
  for (std::size_t r = 0; r < s.t_in; ++r) conv_backward_input_row(s, dy, kernel, dx, r);
}

void conv1d_backward_input_omp(const ConvArgs& s, std::span<const double> dy,
                               std::span<const double> kernel, std::span<double> dx) {
  const auto t_in = static_cast<std::int64_t>(s.t_in);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < t_in; ++r) {
    conv_backward_input_row(s, dy, kernel, dx, static_cast<std::size_t>(r));
  }
}

void conv1d_backward_input(const ConvArgs& s, std::span<const double> dy,
                           std::span<const double> kernel, std::span<double> dx) {
  if (worth_parallel(s.t_out() * s.width * s.d_in * s.d_out)) {
    conv1d_backward_input_omp(s, dy, kernel, dx);
  } else {
    conv1d_backward_input_serial(s, dy, kernel, dx);
  }
}

void conv1d_backward_kernel_serial(const ConvArgs& s, std::span<const double> x,
                                   std::span<const double> dy, std::span<double> dkernel) {
  for (std::size_t wi = 0; wi < s.width * s.d_in; ++wi) {
    conv_backward_kernel_row(s, x, dy, dkernel, wi);
  }
}

void conv1d_backward_kernel_omp(const ConvArgs& s, std::span<const double> x,
                                std::span<const double> dy, std::span<double> dkernel) {
  const auto rows = static_cast<std::int64_t>(s.width * s.d_in);
#pragma omp parallel for schedule(static)
  for (std::int64_t wi = 0; wi < rows; ++wi) {
    conv_backward_kernel_row(s, x, dy, dkernel, static_cast<std::size_t>(wi));
  }
}

void conv1d_backward_kernel(const ConvArgs& s, std::span<const double> x,
                            std::span<const double> dy, std::span<double> dkernel) {
  if (worth_parallel(s.t_out() * s.width * s.d_in * s.d_out)) {
    conv1d_backward_kernel_omp(s, x, dy, dkernel);
  } else {
    conv1d_backward_kernel_serial(s, x, dy, dkernel);
  }
}

}  // namespace mtkd::kernels
