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

#include "mtkd/model.h"

#include "mtkd/error.h"
#include "mtkd/rng.h"

namespace mtkd {

std::size_t ModelConfig::tap(Task task) const {
  switch (task) {
    case Task::kAsr: return tap_asr;
    case Task::kAt: return tap_at;
    case Task::kSv: return tap_sv;
  }
  return 0;
}

void ModelConfig::validate() const {
  encoder.validate();
  heads.validate();
  if (heads.model_dim != encoder.model_dim) {
    throw ConfigError("heads.model_dim (" + std::to_string(heads.model_dim) + ") must equal encoder.model_dim (" +
                      std::to_string(encoder.model_dim) + ")");
  }
  for (Task t : kAllTasks) {
    if (tap(t) < 1 || tap(t) > encoder.num_blocks) {
      throw ConfigError("tap_" + std::string(task_name(t)) + " = " + std::to_string(tap(t)) +
                        " is outside 1.." + std::to_string(encoder.num_blocks));
    }
  }
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  visit([&](Parameter& p) { out.push_back(&p); });
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  visit([&](Parameter& p) { n += p.size(); });
  return n;
}

Model model_init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.config = cfg;
  m.config.encoder.seed = seed;
  m.encoder = encoder_init(m.config.encoder);
  const std::uint64_t head_seed = derive_key(seed, "heads");
  m.head_asr = asr_head_init(cfg.heads, head_seed);
  m.head_at = at_head_init(cfg.heads, head_seed);
  m.head_sv = sv_head_init(cfg.heads, head_seed);
  return m;
}

void add_finetune_heads(Model& model, std::uint64_t seed) {
  const std::uint64_t head_seed = derive_key(seed, "finetune-heads");
  if (!model.transducer) model.transducer = transducer_init(model.config.heads, head_seed);
  if (!model.sv_classifier) model.sv_classifier = sv_classifier_init(model.config.heads, head_seed);
}

Tensor infer_asr_projection(Model& model, const Tensor& features) {
  Tape tape;
  const Binder bind = Binder::inference(tape);
  const LayerOutputs out = encoder_forward(bind, model.encoder, features);
  return asr_project(bind, model.head_asr, tap(out, model.config.tap_asr)).value();
}

Tensor infer_at_logits(Model& model, const Tensor& features) {
  Tape tape;
  const Binder bind = Binder::inference(tape);
  const LayerOutputs out = encoder_forward(bind, model.encoder, features);
  return at_logits(bind, model.head_at, tap(out, model.config.tap_at)).value();
}

Tensor infer_sv_embedding(Model& model, const Tensor& features) {
  Tape tape;
  const Binder bind = Binder::inference(tape);
  const LayerOutputs out = encoder_forward(bind, model.encoder, features);
  return sv_embed(bind, model.head_sv, tap(out, model.config.tap_sv)).value();
}

}  // namespace mtkd
