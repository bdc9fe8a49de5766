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

// Student audio encoder: convolutional subsampling front-end followed by N
// pre-norm transformer blocks. Every block output is kept so task heads can
// tap any depth.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtkd/autodiff.h"

namespace mtkd {

struct EncoderConfig {
  std::size_t num_blocks = 6;
  std::size_t model_dim = 64;
  std::size_t ffn_dim = 128;
  std::size_t attn_heads = 4;
  // Input frames per output frame; a power of two, one stride-2 conv per factor 2.
  std::size_t frontend_subsample = 4;
  std::size_t input_dim = 80;
  std::size_t frontend_channels = 64;
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t num_conv_layers() const;
  // Output frame count for T input frames: floor(T / frontend_subsample).
  std::size_t output_frames(std::size_t input_frames) const;
  // Smallest input length the front-end accepts.
  std::size_t min_input_frames() const;
  // Closed-form number of scalar parameters.
  std::size_t parameter_count() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct EncoderBlock {
  Parameter ln1_gain, ln1_bias;
  Parameter wq, bq, wk, bk, wv, bv, wo, bo;
  Parameter ln2_gain, ln2_bias;
  Parameter w1, b1, w2, b2;

  template <typename F>
  void visit(F&& f) {
    for (Parameter* p : {&ln1_gain, &ln1_bias, &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo,
                         &ln2_gain, &ln2_bias, &w1, &b1, &w2, &b2}) {
      f(*p);
    }
  }
};

struct Encoder {
  EncoderConfig config;
  // Per conv layer: kernel [3 x Cin x C] and bias [C].
  std::vector<Parameter> conv_kernels;
  std::vector<Parameter> conv_biases;
  Parameter proj_w, proj_b;
  std::vector<EncoderBlock> blocks;

  template <typename F>
  void visit(F&& f) {
    for (std::size_t i = 0; i < conv_kernels.size(); ++i) {
      f(conv_kernels[i]);
      f(conv_biases[i]);
    }
    f(proj_w);
    f(proj_b);
    for (EncoderBlock& b : blocks) b.visit(f);
  }
};

// Group tags: "frontend" and "block_1" .. "block_N".
std::string block_group(std::size_t index_1based);
bool is_encoder_group(const std::string& group);

Encoder encoder_init(const EncoderConfig& cfg);

struct LayerOutputs {
  Var frontend;           // front-end projection plus positional encoding
  std::vector<Var> reps;  // R^1 .. R^N, each [T' x D]
  std::size_t frames = 0;
};

// Conv front-end: each layer right-pads one zero frame, then applies a width-3
// stride-2 convolution and ReLU, so T -> floor(T / 2) per layer. A linear map
// to model_dim and fixed sinusoidal positions follow.
Var encoder_frontend(const Binder& bind, Encoder& enc, Var features);

LayerOutputs encoder_forward(const Binder& bind, Encoder& enc, const Tensor& features);
LayerOutputs encoder_forward(const Binder& bind, Encoder& enc, Var features);

// R^i for 1 <= i <= N.
Var tap(const LayerOutputs& outputs, std::size_t layer_1based);

Tensor sinusoidal_positions(std::size_t frames, std::size_t dim);

}  // namespace mtkd
