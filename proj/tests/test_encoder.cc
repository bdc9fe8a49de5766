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
#include <set>

#include "mtkd/encoder.h"
#include "mtkd/error.h"
#include "support/gradcheck.h"

namespace mtkd {
namespace {

using testing::random_tensor;

std::vector<Tensor> values(Encoder& enc) {
  std::vector<Tensor> out;
  enc.visit([&](Parameter& p) { out.push_back(p.value); });
  return out;
}

TEST(EncoderInit, DeterministicPerSeed) {
  EncoderConfig cfg;
  Encoder a = encoder_init(cfg), b = encoder_init(cfg);
  EXPECT_EQ(values(a), values(b));
  cfg.seed = 2;
  Encoder c = encoder_init(cfg);
  EXPECT_NE(values(a), values(c));
}

TEST(EncoderInit, ParameterCountMatchesClosedForm) {
  for (std::size_t blocks : {1u, 2u, 6u}) {
    EncoderConfig cfg;
    cfg.num_blocks = blocks;
    Encoder enc = encoder_init(cfg);
    std::size_t n = 0;
    enc.visit([&](Parameter& p) { n += p.size(); });
    EXPECT_EQ(n, cfg.parameter_count());
  }
}

TEST(EncoderInit, HandAuditedSmallCount) {
  // conv 3*3*5+5 = 50, proj 5*4+4 = 24,
  // block: norms 16 + attention 4*(16+4) + ffn (4*8+8) + (8*4+4) = 172.
  EncoderConfig cfg;
  cfg.num_blocks = 1;
  cfg.model_dim = 4;
  cfg.ffn_dim = 8;
  cfg.attn_heads = 2;
  cfg.frontend_subsample = 2;
  cfg.input_dim = 3;
  cfg.frontend_channels = 5;
  EXPECT_EQ(cfg.parameter_count(), 246u);
}

TEST(EncoderInit, GroupsAreTagged) {
  Encoder enc = encoder_init(EncoderConfig{});
  std::set<std::string> groups;
  enc.visit([&](Parameter& p) { groups.insert(p.group); });
  std::set<std::string> want{"frontend"};
  for (int i = 1; i <= 6; ++i) want.insert("block_" + std::to_string(i));
  EXPECT_EQ(groups, want);
}

TEST(EncoderConfig, ValidationRejectsBadConfigs) {
  EncoderConfig cfg;
  cfg.num_blocks = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.attn_heads = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.frontend_subsample = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.frontend_subsample = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(EncoderForward, FrameArithmetic) {
  EncoderConfig cfg;
  cfg.num_blocks = 2;
  Encoder enc = encoder_init(cfg);
  for (std::size_t frames : {4u, 5u, 15u, 16u, 17u, 33u}) {
    Tape tape;
    LayerOutputs out = encoder_forward(Binder::inference(tape), enc, random_tensor({frames, 80}, frames));
    EXPECT_EQ(out.frames, frames / 4);
    ASSERT_EQ(out.reps.size(), 2u);
    for (Var r : out.reps) EXPECT_EQ(r.shape(), (Shape{frames / 4, 64}));
  }
  Tape tape;
  EXPECT_THROW(encoder_forward(Binder::inference(tape), enc, Tensor({3, 80})), ShapeError);
  EXPECT_THROW(encoder_forward(Binder::inference(tape), enc, Tensor({16, 79})), ShapeError);
}

TEST(EncoderForward, ZeroResidualBranchesPassFrontEndThrough) {
  Encoder enc = encoder_init(EncoderConfig{});
  for (EncoderBlock& b : enc.blocks) {
    for (Parameter* p : {&b.wo, &b.bo, &b.w2, &b.b2}) std::fill(p->value.vec().begin(), p->value.vec().end(), 0.0);
  }
  Tape tape;
  LayerOutputs out = encoder_forward(Binder::inference(tape), enc, random_tensor({16, 80}, 1));
  for (Var r : out.reps) EXPECT_EQ(r.value(), out.frontend.value());
}

TEST(EncoderForward, TapReturnsTheBlockOutput) {
  Encoder enc = encoder_init(EncoderConfig{});
  Tape tape;
  LayerOutputs out = encoder_forward(Binder::inference(tape), enc, random_tensor({16, 80}, 1));
  EXPECT_EQ(tap(out, 6).id(), out.reps[5].id());
  EXPECT_EQ(tap(out, 3).id(), out.reps[2].id());
  EXPECT_THROW(tap(out, 0), ContractError);
  EXPECT_THROW(tap(out, 7), ContractError);
}

TEST(EncoderForward, IndependentOfOtherUtterancesAndRepeatable) {
  Encoder enc = encoder_init(EncoderConfig{});
  const Tensor a = random_tensor({20, 80}, 1), b = random_tensor({12, 80}, 2);
  auto run = [&](const Tensor& x) {
    Tape tape;
    return encoder_forward(Binder::inference(tape), enc, x).reps.back().value();
  };
  const Tensor a_first = run(a);
  run(b);
  const Tensor a_again = run(a);
  EXPECT_EQ(a_first, a_again);
}

TEST(SinusoidalPositions, KnownValues) {
  const Tensor pe = sinusoidal_positions(3, 4);
  EXPECT_EQ(pe.at(0, 0), 0.0);
  EXPECT_EQ(pe.at(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(pe.at(1, 0), std::sin(1.0));
  EXPECT_DOUBLE_EQ(pe.at(2, 3), std::cos(2.0 / 100.0));
}

}  // namespace
}  // namespace mtkd
