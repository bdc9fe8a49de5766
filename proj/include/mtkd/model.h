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

// The student: encoder, the three distillation heads and, once fine-tuning
// starts, the transducer and speaker classifier.

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mtkd/encoder.h"
#include "mtkd/heads.h"
#include "mtkd/losses.h"

namespace mtkd {

struct ModelConfig {
  EncoderConfig encoder;
  HeadDims heads;
  // Encoder blocks feeding each task head, 1-based.
  std::size_t tap_asr = 6;
  std::size_t tap_at = 6;
  std::size_t tap_sv = 3;

  std::size_t tap(Task task) const;
  // Also checks that the head input width matches the encoder width.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Model {
  ModelConfig config;
  Encoder encoder;
  AsrProjectionHead head_asr;
  AtHead head_at;
  SvHead head_sv;
  std::optional<TransducerHead> transducer;
  std::optional<SvClassifier> sv_classifier;

  template <typename F>
  void visit(F&& f) {
    encoder.visit(f);
    head_asr.visit(f);
    head_at.visit(f);
    head_sv.visit(f);
    if (transducer) transducer->visit(f);
    if (sv_classifier) sv_classifier->visit(f);
  }

  std::vector<Parameter*> parameters();
  std::size_t parameter_count();
};

// Encoder and distillation heads. All values derive from `seed`.
Model model_init(const ModelConfig& cfg, std::uint64_t seed);
// Adds the transducer and speaker classifier when absent.
void add_finetune_heads(Model& model, std::uint64_t seed);

// Inference without gradients.
Tensor infer_asr_projection(Model& model, const Tensor& features);  // [T' x 2 D_t]
Tensor infer_at_logits(Model& model, const Tensor& features);       // [K]
Tensor infer_sv_embedding(Model& model, const Tensor& features);    // [J]

}  // namespace mtkd
