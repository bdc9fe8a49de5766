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

#include <gtest/gtest.h>

#include <omp.h>

#include "mtkd/kernels.h"
#include "support/gradcheck.h"
#include "support/oracles.h"

namespace mtkd::kernels {
namespace {

using mtkd::testing::random_tensor;

class ThreadCount {
 public:
  explicit ThreadCount(int n) : saved_(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~ThreadCount() { omp_set_num_threads(saved_); }

 private:
  int saved_;
};

TEST(Gemm, SerialAndParallelAgreeBitwiseForEveryTransposeMode) {
  const std::size_t m = 37, k = 23, n = 29;
  for (int mode = 0; mode < 4; ++mode) {
    const bool ta = mode & 1, tb = mode & 2;
    Tensor a = random_tensor({m * k}, 1 + mode), b = random_tensor({k * n}, 10 + mode);
    Tensor c0 = random_tensor({m * n}, 20 + mode);
    Tensor c1 = c0;
    GemmArgs args{a.data(), b.data(), c0.data(), m, k, n, ta, tb, true};
    gemm_serial(args);
    ThreadCount threads(4);
    args.c = c1.data();
    gemm_omp(args);
    EXPECT_EQ(c0, c1) << "mode " << mode;
  }
}

TEST(Gemm, MatchesTripleLoop) {
  Tensor a = random_tensor({6, 4}, 3), b = random_tensor({4, 5}, 4);
  Tensor c({6, 5});
  gemm({a.data(), b.data(), c.data(), 6, 4, 5, false, false, false});
  const Tensor want = mtkd::testing::matmul_oracle(a, b);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], want[i], 1e-12);
}

TEST(Gemm, TransposedOperandsMatchExplicitTranspose) {
  Tensor a = random_tensor({4, 6}, 3), b = random_tensor({5, 4}, 4);  // A^T [6x4], B^T [4x5]
  Tensor c({6, 5});
  gemm({a.data(), b.data(), c.data(), 6, 4, 5, true, true, false});
  Tensor at({6, 4}), bt({4, 5});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) at.at(j, i) = a.at(i, j);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) bt.at(j, i) = b.at(i, j);
  const Tensor want = mtkd::testing::matmul_oracle(at, bt);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], want[i], 1e-12);
}

TEST(Conv, SerialAndParallelAgreeBitwise) {
  for (std::size_t stride : {1u, 2u, 3u}) {
    ConvArgs s{41, 7, 9, 3, stride};
    Tensor x = random_tensor({s.t_in * s.d_in}, stride);
    Tensor k = random_tensor({s.width * s.d_in * s.d_out}, 10 + stride);
    Tensor dy = random_tensor({s.t_out() * s.d_out}, 20 + stride);
    Tensor y0({s.t_out() * s.d_out}), y1 = y0;
    Tensor dx0({s.t_in * s.d_in}), dx1 = dx0;
    Tensor dk0({s.width * s.d_in * s.d_out}), dk1 = dk0;
    conv1d_forward_serial(s, x.data(), k.data(), y0.data());
    conv1d_backward_input_serial(s, dy.data(), k.data(), dx0.data());
    conv1d_backward_kernel_serial(s, x.data(), dy.data(), dk0.data());
    ThreadCount threads(3);
    conv1d_forward_omp(s, x.data(), k.data(), y1.data());
    conv1d_backward_input_omp(s, dy.data(), k.data(), dx1.data());
    conv1d_backward_kernel_omp(s, x.data(), dy.data(), dk1.data());
    EXPECT_EQ(y0, y1);
    EXPECT_EQ(dx0, dx1);
    EXPECT_EQ(dk0, dk1);
  }
}

TEST(Conv, ResultIndependentOfThreadCount) {
  ConvArgs s{64, 16, 16, 3, 2};
  Tensor x = random_tensor({s.t_in * s.d_in}, 1), k = random_tensor({s.width * s.d_in * s.d_out}, 2);
  Tensor ref({s.t_out() * s.d_out});
  {
    ThreadCount threads(1);
    conv1d_forward_omp(s, x.data(), k.data(), ref.data());
  }
  for (int n : {2, 3, 5, 8}) {
    ThreadCount threads(n);
    Tensor y({s.t_out() * s.d_out});
    conv1d_forward_omp(s, x.data(), k.data(), y.data());
    EXPECT_EQ(y, ref) << n << " threads";
  }
}

}  // namespace
}  // namespace mtkd::kernels
