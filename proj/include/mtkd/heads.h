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

// Task heads attached to encoder taps: the three distillation modules (ASR
// projection, audio-tagging classifier, attentive-pooling speaker embedder) and
// the fine-tuning heads (transducer predictor/joiner, speaker classifier).

#pragma once

#include <cstdint>
#include <vector>

#include "mtkd/autodiff.h"

namespace mtkd {

struct HeadDims {
  std::size_t model_dim = 64;     // D_s, encoder width
  std::size_t teacher_dim = 16;   // ASR teacher frame width; projection emits 2x
  std::size_t num_classes = 8;    // K audio events
  std::size_t sv_embed_dim = 16;  // J
  std::size_t sv_pool_dim = 32;   // D_p, attentive-pooling channels
  std::size_t sv_kernel = 1;      // conv width in the pooling branch
  std::size_t vocab = 32;         // V; token ids 1..V, 0 is blank
  std::size_t predictor_dim = 32;
  std::size_t joiner_dim = 32;
  std::size_t num_speakers = 16;  // S, training speakers for the classifier

  std::size_t kd_dim() const { return 2 * teacher_dim; }
  void validate() const;

  friend bool operator==(const HeadDims&, const HeadDims&) = default;
};

// Linear map from encoder frames to frame-paired teacher embeddings.
struct AsrProjectionHead {
  Parameter weight, bias;  // [D_s x 2*D_t], [2*D_t]
  template <typename F> void visit(F&& f) { f(weight); f(bias); }
};

struct AtHead {
  Parameter weight, bias;  // [D_s x K], [K]
  template <typename F> void visit(F&& f) { f(weight); f(bias); }
};

struct SvHead {
  Parameter conv1, conv1_bias;  // [W x D_s x D_p]
  Parameter conv2, conv2_bias;  // [W x D_p x D_p], attention scores
  Parameter proj, bias;         // [2*D_p x J]
  template <typename F>
  void visit(F&& f) {
    f(conv1); f(conv1_bias); f(conv2); f(conv2_bias); f(proj); f(bias);
  }
};

struct TransducerHead {
  Parameter embed;                // [(V+1) x D_p], row 0 is the start/blank context
  Parameter pred_w, pred_b;       // [D_p x D_p]
  Parameter enc_proj, pred_proj;  // [D_s x H], [D_p x H]
  Parameter joint_b;              // [H]
  Parameter out_w, out_b;         // [H x (V+1)]
  template <typename F>
  void visit(F&& f) {
    f(embed); f(pred_w); f(pred_b); f(enc_proj); f(pred_proj); f(joint_b); f(out_w); f(out_b);
  }
};

struct SvClassifier {
  Parameter weight, bias;  // [J x S], [S]
  template <typename F> void visit(F&& f) { f(weight); f(bias); }
};

AsrProjectionHead asr_head_init(const HeadDims& dims, std::uint64_t seed);
AtHead at_head_init(const HeadDims& dims, std::uint64_t seed);
SvHead sv_head_init(const HeadDims& dims, std::uint64_t seed);
TransducerHead transducer_init(const HeadDims& dims, std::uint64_t seed);
SvClassifier sv_classifier_init(const HeadDims& dims, std::uint64_t seed);

// [T' x D_s] -> [T' x 2*D_t]
Var asr_project(const Binder& bind, AsrProjectionHead& head, Var rep);

// Per-frame affine map averaged over frames: [T' x D_s] -> [K] pre-sigmoid logits.
Var at_logits(const Binder& bind, AtHead& head, Var rep);

inline constexpr double kSvVarianceFloor = 1e-9;

// Attentive statistics pooling. h = relu(conv1(rep)); scores = conv2(h) with
// zero "same" padding so scores align with h; a = softmax over time per
// channel; mu = sum_t a*h, sigma = sqrt(max(sum_t a*h^2 - mu^2, 0) + 1e-9);
// output = proj([mu; sigma]) + bias, a [J] vector.
Var sv_embed(const Binder& bind, SvHead& head, Var rep);

// Predictor over the previous-token context [0, y_1 .. y_U] -> [(U+1) x D_p].
Var transducer_predict(const Binder& bind, TransducerHead& head,
                       const std::vector<std::size_t>& targets);

// tanh(enc * E + pred * P + b) * W + c, log-softmax over the last axis.
// Returns log-probabilities shaped [T' x (U+1) x (V+1)].
Var transducer_joint(const Binder& bind, TransducerHead& head, Var enc, Var pred);

// [J] -> [S] logits.
Var sv_classify(const Binder& bind, SvClassifier& head, Var embedding);

}  // namespace mtkd
