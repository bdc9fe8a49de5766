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

// Dense compute kernels behind the autodiff ops.
//
// Each kernel has a serial reference and an OpenMP variant. Both variants
// partition work by output row and accumulate every output element in the same
// order, so they agree bitwise; tests rely on that. The plain entry points
// (gemm, conv1d_*) dispatch to the OpenMP variant when the problem is large
// enough and more than one thread is available.

#pragma once

#include <cstddef>
#include <span>

namespace mtkd::kernels {

// C[M x N] (+)= op(A) * op(B), op(A) is M x K, op(B) is K x N.
// A is stored M x K (or K x M when trans_a); B is K x N (or N x K when trans_b).
struct GemmArgs {
  std::span<const double> a;
  std::span<const double> b;
  std::span<double> c;
  std::size_t m = 0, k = 0, n = 0;
  bool trans_a = false;
  bool trans_b = false;
  bool accumulate = false;
};

void gemm_serial(const GemmArgs& args);
void gemm_omp(const GemmArgs& args);
void gemm(const GemmArgs& args);

// Valid 1-D convolution over time.
// x: [T x Din], kernel: [W x Din x Dout], y: [T' x Dout], T' = (T - W) / stride + 1.
struct ConvArgs {
  std::size_t t_in = 0, d_in = 0, d_out = 0, width = 0, stride = 1;
  std::size_t t_out() const { return (t_in - width) / stride + 1; }
};

void conv1d_forward_serial(const ConvArgs& s, std::span<const double> x,
                           std::span<const double> kernel, std::span<double> y);
void conv1d_forward_omp(const ConvArgs& s, std::span<const double> x,
                        std::span<const double> kernel, std::span<double> y);
void conv1d_forward(const ConvArgs& s, std::span<const double> x,
                    std::span<const double> kernel, std::span<double> y);

// dx += dL/dx given dy.
void conv1d_backward_input_serial(const ConvArgs& s, std::span<const double> dy,
                                  std::span<const double> kernel, std::span<double> dx);
void conv1d_backward_input_omp(const ConvArgs& s, std::span<const double> dy,
                               std::span<const double> kernel, std::span<double> dx);
void conv1d_backward_input(const ConvArgs& s, std::span<const double> dy,
                           std::span<const double> kernel, std::span<double> dx);

// dkernel += dL/dkernel given dy.
void conv1d_backward_kernel_serial(const ConvArgs& s, std::span<const double> x,
                                   std::span<const double> dy, std::span<double> dkernel);
void conv1d_backward_kernel_omp(const ConvArgs& s, std::span<const double> x,
                                std::span<const double> dy, std::span<double> dkernel);
void conv1d_backward_kernel(const ConvArgs& s, std::span<const double> x,
                            std::span<const double> dy, std::span<double> dkernel);

// Number of threads the OpenMP variants would use (1 without OpenMP).
int max_threads();

}  // namespace mtkd::kernels
