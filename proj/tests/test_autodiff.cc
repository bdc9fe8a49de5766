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

#include <cmath>

#include "mtkd/autodiff.h"
#include "mtkd/error.h"
#include "support/gradcheck.h"
#include "support/oracles.h"

namespace mtkd {
namespace {

using testing::random_tensor;

TEST(Tensor, ConstructionValidatesElementCount) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(shape_str(t.shape()), "[2x3]");
  EXPECT_THROW(t.dim(2), ShapeError);
}

TEST(Matmul, IdentityAndProjector) {
  Tape tape;
  Var i2 = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var a = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(matmul(i2, a).value(), Tensor::matrix({{1, 2}, {3, 4}}));
  Var p = tape.constant(Tensor::matrix({{1, 0}, {0, 0}}));
  Var b = tape.constant(Tensor::matrix({{5, 6}, {7, 8}}));
  EXPECT_EQ(matmul(p, b).value(), Tensor::matrix({{5, 6}, {0, 0}}));
}

TEST(Matmul, MatchesTripleLoopOracle) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Tensor a = random_tensor({3, 4}, seed), b = random_tensor({4, 2}, seed + 100);
    Tape tape;
    const Tensor got = matmul(tape.constant(a), tape.constant(b)).value();
    const Tensor want = testing::matmul_oracle(a, b);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_LT(std::abs(got[i] - want[i]), 1e-12);
  }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape tape;
  try {
    matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3})));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Elementwise, ScalarExamples) {
  Tape tape;
  EXPECT_EQ(sigmoid(tape.constant(Tensor::scalar(0))).value().item(), 0.5);
  Tensor x = random_tensor({5}, 3);
  EXPECT_EQ(add(tape.constant(x), tape.constant(Tensor::scalar(0))).value(), x);
}

TEST(Elementwise, SigmoidMatchesScalarOracle) {
  Tensor z = random_tensor({200}, 11, -30, 30);
  Tape tape;
  const Tensor s = sigmoid(tape.constant(z)).value();
  for (std::size_t i = 0; i < z.size(); ++i) {
    EXPECT_LT(std::abs(s[i] - 1.0 / (1.0 + std::exp(-z[i]))), 1e-14);
  }
}

TEST(Elementwise, DomainErrors) {
  Tape tape;
  EXPECT_THROW(log(tape.constant(Tensor::vector({1.0, 0.0}))), NumericError);
  EXPECT_THROW(log(tape.constant(Tensor::vector({-2.0}))), NumericError);
  EXPECT_THROW(exp(tape.constant(Tensor::vector({1000.0}))), NumericError);
  EXPECT_THROW(sqrt(tape.constant(Tensor::vector({-1.0}))), NumericError);
  EXPECT_THROW(add(tape.constant(Tensor({2})), tape.constant(Tensor({3}))), ShapeError);
}

TEST(Reduce, Examples) {
  Tape tape;
  EXPECT_EQ(sum(tape.constant(Tensor::vector({1, 2, 3}))).value().item(), 6.0);
  EXPECT_EQ(mean(tape.constant(Tensor::matrix({{2, 4}, {0, 0}})), 0).value(), Tensor::vector({1, 2}));
  EXPECT_THROW(sum(tape.constant(Tensor({2, 2})), 2), ShapeError);
}

TEST(Reduce, MaxTieRoutesGradientToLowestIndex) {
  Tape tape;
  Var x = tape.variable(Tensor::vector({1.0, 3.0, 3.0, 2.0}));
  tape.backward(max(x));
  EXPECT_EQ(tape.grad(x), (std::vector<double>{0, 1, 0, 0}));
}

TEST(LayerNorm, Examples) {
  Tape tape;
  Var gain = tape.constant(Tensor::vector({1, 1}));
  Var bias = tape.constant(Tensor::vector({0, 0}));
  const Tensor c = layer_norm(tape.constant(Tensor::matrix({{3, 3}})), gain, bias).value();
  EXPECT_EQ(c[0], 0.0);
  EXPECT_EQ(c[1], 0.0);
  const Tensor r = layer_norm(tape.constant(Tensor::matrix({{1, -1}})), gain, bias, 0.0).value();
  EXPECT_DOUBLE_EQ(r[0], 1.0);
  EXPECT_DOUBLE_EQ(r[1], -1.0);
}

TEST(LayerNorm, RowStatistics) {
  const std::size_t d = 16;
  Tensor x = random_tensor({7, d}, 5, -3, 3);
  Tape tape;
  const Tensor y = layer_norm(tape.constant(x), tape.constant(Tensor::filled({d}, 1.0)),
                              tape.constant(Tensor({d})))
                       .value();
  for (std::size_t r = 0; r < 7; ++r) {
    double mu = 0, var = 0, xm = 0, xv = 0;
    for (std::size_t c = 0; c < d; ++c) {
      mu += y.at(r, c);
      xm += x.at(r, c);
    }
    mu /= d;
    xm /= d;
    for (std::size_t c = 0; c < d; ++c) {
      var += (y.at(r, c) - mu) * (y.at(r, c) - mu);
      xv += (x.at(r, c) - xm) * (x.at(r, c) - xm);
    }
    var /= d;
    xv /= d;
    EXPECT_LT(std::abs(mu), 1e-10);
    EXPECT_NEAR(var, xv / (xv + kLayerNormEps), 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-5);
  }
}

TEST(Conv1d, Examples) {
  Tape tape;
  Tensor x = random_tensor({5, 2}, 1);
  Tensor ident({1, 2, 2});
  ident[0] = ident[3] = 1.0;
  const Tensor y = conv1d(tape.constant(x), tape.constant(ident), 2).value();
  ASSERT_EQ(y.shape(), (Shape{3, 2}));
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(y.at(t, 0), x.at(2 * t, 0));
    EXPECT_EQ(y.at(t, 1), x.at(2 * t, 1));
  }
  const Tensor avg = conv1d(tape.constant(Tensor::matrix({{1}, {3}, {7}})),
                            tape.constant(Tensor({2, 1, 1}, {0.5, 0.5})), 1)
                         .value();
  EXPECT_EQ(avg, Tensor::matrix({{2}, {5}}));
  EXPECT_THROW(conv1d(tape.constant(Tensor({2, 1})), tape.constant(Tensor({3, 1, 1})), 1), ShapeError);
}

TEST(Conv1d, MatchesNestedLoopOracle) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const std::size_t stride = 1 + seed % 3;
    Tensor x = random_tensor({11, 4}, seed), k = random_tensor({3, 4, 5}, seed + 50);
    Tape tape;
    const Tensor got = conv1d(tape.constant(x), tape.constant(k), stride).value();
    const Tensor want = testing::conv1d_oracle(x, k, stride);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_LT(std::abs(got[i] - want[i]), 1e-12);
  }
}

TEST(Backward, SumAndSquare) {
  Tape tape;
  Tensor xv = random_tensor({3, 2}, 9);
  Var x = tape.variable(xv);
  tape.backward(sum(x));
  EXPECT_EQ(tape.grad(x), std::vector<double>(6, 1.0));
  Tape t2;
  Var y = t2.variable(xv);
  t2.backward(sum(mul(y, y)));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(t2.grad(y)[i], 2 * xv[i]);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tape tape;
  Var x = tape.variable(Tensor({2}));
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(Backward, FanOutAccumulatesBranchGradients) {
  Tensor xv = random_tensor({4}, 2);
  auto branch_a = [](Var x) { return sum(square(x)); };
  auto branch_b = [](Var x) { return sum(tanh(x)); };
  Tape ta, tb, tab;
  Var xa = ta.variable(xv), xb = tb.variable(xv), xab = tab.variable(xv);
  ta.backward(branch_a(xa));
  tb.backward(branch_b(xb));
  tab.backward(add(branch_a(xab), branch_b(xab)));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(tab.grad(xab)[i], ta.grad(xa)[i] + tb.grad(xb)[i]);
  }
}

TEST(Backward, ConstantsNeverReceiveGradients) {
  Tape tape;
  Var c = tape.constant(Tensor::vector({1, 2}));
  Var x = tape.variable(Tensor::vector({3, 4}));
  tape.backward(sum(mul(c, x)));
  EXPECT_FALSE(tape.requires_grad(c));
  EXPECT_TRUE(tape.grad(c).empty());
  EXPECT_EQ(tape.grad(x), (std::vector<double>{1, 2}));
}

TEST(Backward, FrozenParameterBindingGetsNoGradient) {
  Parameter frozen("w", "g", Tensor::vector({1, 2}));
  Parameter live("v", "g", Tensor::vector({3, 4}));
  frozen.grad.assign(2, 0.0);
  live.grad.assign(2, 0.0);
  Tape tape;
  Binder bind(tape, [](const Parameter& p) { return p.name != "w"; });
  tape.backward(sum(mul(bind(frozen), bind(live))));
  tape.accumulate_parameter_grads();
  EXPECT_EQ(frozen.grad, (std::vector<double>{0, 0}));
  EXPECT_EQ(live.grad, (std::vector<double>{1, 2}));
}

TEST(Backward, DeterministicAcrossRepeats) {
  auto run = [] {
    Tape tape;
    Var a = tape.variable(random_tensor({4, 5}, 1));
    Var b = tape.variable(random_tensor({5, 3}, 2));
    Var l = sum(tanh(matmul(a, b)));
    tape.backward(l);
    std::vector<double> out = tape.grad(a);
    out.insert(out.end(), tape.grad(b).begin(), tape.grad(b).end());
    out.push_back(l.value().item());
    return out;
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace mtkd
