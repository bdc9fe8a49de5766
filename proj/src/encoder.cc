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

#include "mtkd/encoder.h"

#include <cmath>

#include "mtkd/error.h"
#include "mtkd/init.h"

namespace mtkd {
namespace {

constexpr std::size_t kConvWidth = 3;
constexpr std::size_t kConvStride = 2;

Var attention(const Binder& bind, EncoderBlock& b, Var x, std::size_t heads) {
  const std::size_t d = x.dim(1);
  const std::size_t dh = d / heads;
  Var q = linear(x, bind(b.wq), bind(b.bq));
  Var k = linear(x, bind(b.wk), bind(b.bk));
  Var v = linear(x, bind(b.wv), bind(b.bv));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = slice_cols(q, h * dh, dh);
    Var kh = slice_cols(k, h * dh, dh);
    Var vh = slice_cols(v, h * dh, dh);
    Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    outs.push_back(matmul(softmax(scores, 1), vh));
  }
  Var joined = heads == 1 ? outs.front() : concat_cols(outs);
  return linear(joined, bind(b.wo), bind(b.bo));
}

Var block_forward(const Binder& bind, EncoderBlock& b, Var x, std::size_t heads) {
  Var h = layer_norm(x, bind(b.ln1_gain), bind(b.ln1_bias));
  x = add(x, attention(bind, b, h, heads));
  Var f = layer_norm(x, bind(b.ln2_gain), bind(b.ln2_bias));
  f = linear(relu(linear(f, bind(b.w1), bind(b.b1))), bind(b.w2), bind(b.b2));
  return add(x, f);
}

}  // namespace

void EncoderConfig::validate() const {
  if (num_blocks < 1) throw ConfigError("encoder.num_blocks must be >= 1");
  if (model_dim < 1 || attn_heads < 1 || model_dim % attn_heads != 0) {
    throw ConfigError("encoder.model_dim must be divisible by encoder.attn_heads");
  }
  if (frontend_subsample < 1 || (frontend_subsample & (frontend_subsample - 1)) != 0) {
    throw ConfigError("encoder.frontend_subsample must be a power of two >= 1");
  }
  if (input_dim < 1 || ffn_dim < 1 || frontend_channels < 1) {
    throw ConfigError("encoder dimensions must be positive");
  }
}

std::size_t EncoderConfig::num_conv_layers() const {
  std::size_t n = 0;
  for (std::size_t s = frontend_subsample; s > 1; s >>= 1) ++n;
  return n;
}

std::size_t EncoderConfig::output_frames(std::size_t input_frames) const {
  return input_frames / frontend_subsample;
}

std::size_t EncoderConfig::min_input_frames() const {
  // Each conv layer needs T >= 2 at its input ((T + 1) >= 3 after padding),
  // which is T >= frontend_subsample at the encoder input.
  return frontend_subsample;
}

std::size_t EncoderConfig::parameter_count() const {
  std::size_t n = 0;
  std::size_t c_in = input_dim;
  for (std::size_t l = 0; l < num_conv_layers(); ++l) {
    n += kConvWidth * c_in * frontend_channels + frontend_channels;
    c_in = frontend_channels;
  }
  n += c_in * model_dim + model_dim;
  const std::size_t d = model_dim;
  const std::size_t per_block = 4 * d                  // two layer norms
                                + 4 * (d * d + d)      // q, k, v, o
                                + (d * ffn_dim + ffn_dim) + (ffn_dim * d + d);
  return n + num_blocks * per_block;
}

std::string block_group(std::size_t index_1based) { return "block_" + std::to_string(index_1based); }

bool is_encoder_group(const std::string& group) {
  return group == "frontend" || group.rfind("block_", 0) == 0;
}

Encoder encoder_init(const EncoderConfig& cfg) {
  cfg.validate();
  Encoder enc;
  enc.config = cfg;
  const std::uint64_t seed = cfg.seed;
  std::size_t c_in = cfg.input_dim;
  for (std::size_t l = 0; l < cfg.num_conv_layers(); ++l) {
    const std::string name = "frontend.conv" + std::to_string(l);
    enc.conv_kernels.push_back(uniform_parameter(name + ".kernel", "frontend",
                                                 {kConvWidth, c_in, cfg.frontend_channels},
                                                 kConvWidth * c_in, seed));
    enc.conv_biases.push_back(
        constant_parameter(name + ".bias", "frontend", {cfg.frontend_channels}, 0.0));
    c_in = cfg.frontend_channels;
  }
  const std::size_t d = cfg.model_dim;
  enc.proj_w = uniform_parameter("frontend.proj.weight", "frontend", {c_in, d}, c_in, seed);
  enc.proj_b = constant_parameter("frontend.proj.bias", "frontend", {d}, 0.0);
  for (std::size_t i = 1; i <= cfg.num_blocks; ++i) {
    const std::string g = block_group(i);
    const std::string p = g + ".";
    EncoderBlock b;
    b.ln1_gain = constant_parameter(p + "ln1.gain", g, {d}, 1.0);
    b.ln1_bias = constant_parameter(p + "ln1.bias", g, {d}, 0.0);
    b.wq = uniform_parameter(p + "attn.wq", g, {d, d}, d, seed);
    b.bq = constant_parameter(p + "attn.bq", g, {d}, 0.0);
    b.wk = uniform_parameter(p + "attn.wk", g, {d, d}, d, seed);
    b.bk = constant_parameter(p + "attn.bk", g, {d}, 0.0);
    b.wv = uniform_parameter(p + "attn.wv", g, {d, d}, d, seed);
    b.bv = constant_parameter(p + "attn.bv", g, {d}, 0.0);
    b.wo = uniform_parameter(p + "attn.wo", g, {d, d}, d, seed);
    b.bo = constant_parameter(p + "attn.bo", g, {d}, 0.0);
    b.ln2_gain = constant_parameter(p + "ln2.gain", g, {d}, 1.0);
    b.ln2_bias = constant_parameter(p + "ln2.bias", g, {d}, 0.0);
    b.w1 = uniform_parameter(p + "ffn.w1", g, {d, cfg.ffn_dim}, d, seed);
    b.b1 = constant_parameter(p + "ffn.b1", g, {cfg.ffn_dim}, 0.0);
    b.w2 = uniform_parameter(p + "ffn.w2", g, {cfg.ffn_dim, d}, cfg.ffn_dim, seed);
    b.b2 = constant_parameter(p + "ffn.b2", g, {d}, 0.0);
    enc.blocks.push_back(std::move(b));
  }
  return enc;
}

Tensor sinusoidal_positions(std::size_t frames, std::size_t dim) {
  Tensor pe({frames, dim});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dim));
      const double angle = static_cast<double>(t) * rate;
      pe[t * dim + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Var encoder_frontend(const Binder& bind, Encoder& enc, Var features) {
  const EncoderConfig& cfg = enc.config;
  if (features.value().rank() != 2 || features.dim(1) != cfg.input_dim) {
    throw ShapeError("encoder: expected [T x " + std::to_string(cfg.input_dim) +
                     "] features, got " + shape_str(features.shape()));
  }
  if (features.dim(0) < cfg.min_input_frames()) {
    throw ShapeError("encoder: sequence too short (" + std::to_string(features.dim(0)) +
                     " frames, front-end needs at least " +
                     std::to_string(cfg.min_input_frames()) + ")");
  }
  Var x = features;
  for (std::size_t l = 0; l < enc.conv_kernels.size(); ++l) {
    x = pad_rows(x, 0, 1);
    x = relu(add_rowwise(conv1d(x, bind(enc.conv_kernels[l]), kConvStride),
                         bind(enc.conv_biases[l])));
  }
  x = linear(x, bind(enc.proj_w), bind(enc.proj_b));
  return add(x, bind.constant(sinusoidal_positions(x.dim(0), cfg.model_dim)));
}

LayerOutputs encoder_forward(const Binder& bind, Encoder& enc, const Tensor& features) {
  return encoder_forward(bind, enc, bind.constant(features));
}

LayerOutputs encoder_forward(const Binder& bind, Encoder& enc, Var features) {
  LayerOutputs out;
  out.frontend = encoder_frontend(bind, enc, features);
  out.frames = out.frontend.dim(0);
  Var x = out.frontend;
  for (EncoderBlock& b : enc.blocks) {
    x = block_forward(bind, b, x, enc.config.attn_heads);
    out.reps.push_back(x);
  }
  return out;
}

Var tap(const LayerOutputs& outputs, std::size_t layer_1based) {
  if (layer_1based < 1 || layer_1based > outputs.reps.size()) {
    throw ContractError("tap: layer " + std::to_string(layer_1based) + " outside 1.." +
                        std::to_string(outputs.reps.size()));
  }
  return outputs.reps[layer_1based - 1];
}

}  // namespace mtkd
