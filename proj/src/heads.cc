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

#include "mtkd/heads.h"

#include "mtkd/error.h"
#include "mtkd/init.h"

namespace mtkd {

void HeadDims::validate() const {
  if (model_dim == 0 || teacher_dim == 0 || num_classes == 0 || sv_embed_dim == 0 ||
      sv_pool_dim == 0 || sv_kernel == 0 || vocab == 0 || predictor_dim == 0 ||
      joiner_dim == 0 || num_speakers == 0) {
    throw ConfigError("heads: every dimension must be positive");
  }
}

AsrProjectionHead asr_head_init(const HeadDims& d, std::uint64_t seed) {
  return {uniform_parameter("head_asr.weight", "head_asr", {d.model_dim, d.kd_dim()},
                            d.model_dim, seed),
          constant_parameter("head_asr.bias", "head_asr", {d.kd_dim()}, 0.0)};
}

AtHead at_head_init(const HeadDims& d, std::uint64_t seed) {
  return {uniform_parameter("head_at.weight", "head_at", {d.model_dim, d.num_classes},
                            d.model_dim, seed),
          constant_parameter("head_at.bias", "head_at", {d.num_classes}, 0.0)};
}

SvHead sv_head_init(const HeadDims& d, std::uint64_t seed) {
  const std::size_t w = d.sv_kernel, p = d.sv_pool_dim;
  return {uniform_parameter("head_sv.conv1", "head_sv", {w, d.model_dim, p}, w * d.model_dim, seed),
          constant_parameter("head_sv.conv1_bias", "head_sv", {p}, 0.0),
          uniform_parameter("head_sv.conv2", "head_sv", {w, p, p}, w * p, seed),
          constant_parameter("head_sv.conv2_bias", "head_sv", {p}, 0.0),
          uniform_parameter("head_sv.proj", "head_sv", {2 * p, d.sv_embed_dim}, 2 * p, seed),
          constant_parameter("head_sv.bias", "head_sv", {d.sv_embed_dim}, 0.0)};
}

TransducerHead transducer_init(const HeadDims& d, std::uint64_t seed) {
  const std::size_t v1 = d.vocab + 1, p = d.predictor_dim, h = d.joiner_dim;
  const std::string g = "transducer";
  return {uniform_parameter("transducer.embed", g, {v1, p}, 1, seed),
          uniform_parameter("transducer.pred_w", g, {p, p}, p, seed),
          constant_parameter("transducer.pred_b", g, {p}, 0.0),
          uniform_parameter("transducer.enc_proj", g, {d.model_dim, h}, d.model_dim, seed),
          uniform_parameter("transducer.pred_proj", g, {p, h}, p, seed),
          constant_parameter("transducer.joint_b", g, {h}, 0.0),
          uniform_parameter("transducer.out_w", g, {h, v1}, h, seed),
          constant_parameter("transducer.out_b", g, {v1}, 0.0)};
}

SvClassifier sv_classifier_init(const HeadDims& d, std::uint64_t seed) {
  return {uniform_parameter("sv_classifier.weight", "sv_classifier",
                            {d.sv_embed_dim, d.num_speakers}, d.sv_embed_dim, seed),
          constant_parameter("sv_classifier.bias", "sv_classifier", {d.num_speakers}, 0.0)};
}

Var asr_project(const Binder& bind, AsrProjectionHead& head, Var rep) {
  return linear(rep, bind(head.weight), bind(head.bias));
}

Var at_logits(const Binder& bind, AtHead& head, Var rep) {
  if (rep.value().rank() != 2 || rep.dim(0) == 0) {
    throw ShapeError("at_logits: need a non-empty [T x D] sequence, got " +
                     shape_str(rep.shape()));
  }
  return mean(linear(rep, bind(head.weight), bind(head.bias)), 0);
}

Var sv_embed(const Binder& bind, SvHead& head, Var rep) {
  const std::size_t w = head.conv1.value.dim(0);
  if (rep.value().rank() != 2 || rep.dim(0) < w) {
    throw ShapeError("sv_embed: sequence of " + std::to_string(rep.value().rank() == 2 ? rep.dim(0) : 0) +
                     " frames is shorter than the pooling kernel width " + std::to_string(w));
  }
  Var h = relu(add_rowwise(conv1d(rep, bind(head.conv1), 1), bind(head.conv1_bias)));
  const std::size_t w2 = head.conv2.value.dim(0);
  Var padded = w2 > 1 ? pad_rows(h, (w2 - 1) / 2, w2 - 1 - (w2 - 1) / 2) : h;
  Var scores = add_rowwise(conv1d(padded, bind(head.conv2), 1), bind(head.conv2_bias));
  Var att = softmax(scores, 0);
  Var mu = sum(mul(att, h), 0);
  Var second = sum(mul(att, square(h)), 0);
  Var var = relu(sub(second, square(mu)));
  Var sigma = sqrt(add_scalar(var, kSvVarianceFloor));
  Var stats = reshape(concat({mu, sigma}), {1, 2 * mu.dim(0)});
  Var out = linear(stats, bind(head.proj), bind(head.bias));
  return reshape(out, {out.dim(1)});
}

Var transducer_predict(const Binder& bind, TransducerHead& head,
                       const std::vector<std::size_t>& targets) {
  std::vector<std::size_t> context;
  context.reserve(targets.size() + 1);
  context.push_back(0);
  context.insert(context.end(), targets.begin(), targets.end());
  Var e = embedding(bind(head.embed), context);
  return tanh(linear(e, bind(head.pred_w), bind(head.pred_b)));
}

Var transducer_joint(const Binder& bind, TransducerHead& head, Var enc, Var pred) {
  if (enc.value().rank() != 2 || pred.value().rank() != 2) {
    throw ShapeError("transducer_joint: expected 2-D encoder and predictor outputs, got " +
                     shape_str(enc.shape()) + " and " + shape_str(pred.shape()));
  }
  const std::size_t frames = enc.dim(0), u1 = pred.dim(0);
  Var a = matmul(enc, bind(head.enc_proj));
  Var b = add_rowwise(matmul(pred, bind(head.pred_proj)), bind(head.joint_b));
  Var z = tanh(pairwise_add(a, b));
  Var logits = linear(z, bind(head.out_w), bind(head.out_b));
  const std::size_t v1 = logits.dim(1);
  return reshape(log_softmax(logits, 1), {frames, u1, v1});
}

Var sv_classify(const Binder& bind, SvClassifier& head, Var embedding) {
  if (embedding.value().rank() != 1) {
    throw ShapeError("sv_classify: expected a [J] embedding, got " + shape_str(embedding.shape()));
  }
  Var out = linear(reshape(embedding, {1, embedding.dim(0)}), bind(head.weight), bind(head.bias));
  return reshape(out, {out.dim(1)});
}

}  // namespace mtkd
