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

// Two-stage training: multi-teacher distillation pre-training, then
// multi-task fine-tuning with freezing, per-group learning rates and optional
// distillation auxiliary losses.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "mtkd/checkpoint.h"
#include "mtkd/datapipe.h"
#include "mtkd/losses.h"
#include "mtkd/model.h"

namespace mtkd {

enum class Stage { kPretrain, kFinetune };
std::string_view stage_name(Stage stage);

// Fine-tuning tasks that train on their distillation loss. AT and SV use it
// instead of the supervised loss; ASR adds it to the transducer loss.
struct KdAux {
  bool asr = false;
  bool at = false;
  bool sv = false;

  bool operator[](Task t) const { return t == Task::kAsr ? asr : t == Task::kAt ? at : sv; }
  friend bool operator==(const KdAux&, const KdAux&) = default;
};

struct AugmentConfig {
  SpecAugmentPolicy spec;
  double noise_snr_db = INFINITY;  // +inf disables mixing
  std::size_t noise_segments = 8;
  std::size_t noise_frames = 64;

  bool enabled() const { return spec.enabled() || noise_snr_db != INFINITY; }
  friend bool operator==(const AugmentConfig&, const AugmentConfig&) = default;
};

struct FreezePolicy {
  std::size_t encoder_warmup_steps = 50;
  // Freezes the speaker head, the classifier and the encoder up to the SV tap,
  // and drops SV utterances from fine-tuning batches.
  bool freeze_sv = false;
  double encoder_lr_scale = 0.2;

  void validate() const;
  friend bool operator==(const FreezePolicy&, const FreezePolicy&) = default;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
};

struct StageConfig {
  Stage stage = Stage::kPretrain;
  LossWeights weights;
  KdAux kd_aux;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0: no cap
  double base_lr = 1e-3;
  std::size_t warmup_steps = 50;
  std::size_t checkpoint_interval = 0;  // steps; 0: final checkpoint only
  std::size_t average_last_k = 10;
  std::size_t frame_budget = 512;
  double grad_clip = 0.0;  // global L2 max-norm; 0 disables
  AugmentConfig augment;
  AdamConfig adam;

  void validate() const;
};

// Linear warm-up to base_lr over `warmup` steps, then base_lr * sqrt(warmup / step).
// warmup = 0 gives a constant base_lr.
double lr_schedule(std::uint64_t step, double base_lr, std::size_t warmup);

// One Adam step with bias correction over the parameters of one group, using
// each parameter's accumulated grad. `t` is the group's 1-based update count.
// Throws NumericError naming the group when a gradient is not finite; nothing
// is modified in that case.
void adam_update(const std::vector<Parameter*>& group, const std::string& group_name, double lr, std::uint64_t t,
                 const AdamConfig& cfg = {});

struct TrainSample {
  const UtteranceRecord* utterance = nullptr;
  const Tensor* teacher = nullptr;  // aligned teacher target, null when absent
};

// Builds the per-sample loss on `bind`'s tape. Pre-training uses the task's
// distillation loss; fine-tuning uses the supervised loss, switched or
// supplemented by `kd_aux`. Throws DataError when a needed teacher target or
// label is missing.
Var sample_loss(const Binder& bind, Model& model, const UtteranceRecord& utt, const Tensor& features,
                const Tensor* teacher, Stage stage, const KdAux& kd_aux);

struct StepReport {
  LossReport losses;
  double lr = 0.0;                       // head learning rate
  std::map<std::string, double> group_lr;  // applied rate per updated group
  double grad_norm = 0.0;
};

// Whether `group` receives updates at `step` under the stage and policy.
bool group_trainable(const std::string& group, std::uint64_t step, const StageConfig& cfg,
                     const FreezePolicy& policy, const ModelConfig& model);

// Forward, backward and Adam update on one batch. Per-sample tapes run in
// parallel; gradients are reduced serially in batch order, so results do not
// depend on the thread count.
StepReport train_step(Model& model, TrainState& state, const std::vector<TrainSample>& batch,
                      const StageConfig& cfg, const FreezePolicy& policy);

// Loss report for a batch without updating anything.
LossReport evaluate_batch(Model& model, const std::vector<TrainSample>& batch, Stage stage, const KdAux& kd_aux,
                          const LossWeights& weights);

struct TrainingCorpus {
  Corpus corpus;
  std::vector<Tensor> teacher;  // aligned with corpus.utterances, or empty
  std::size_t repeat = 1;
};

struct StageResult {
  std::vector<std::filesystem::path> checkpoints;  // in step order
  LossReport first_losses;
  LossReport last_losses;
};

// Runs a stage from `state` (fresh or resumed) until `cfg.epochs` sampler
// epochs have completed or `cfg.max_steps` total steps are reached. Writes
// ckpt-<step>.bin every checkpoint_interval steps and at the end, and appends
// one JSON line per step to `log`.
StageResult run_stage(Model& model, TrainState& state, const std::vector<TrainingCorpus>& data,
                      const StageConfig& cfg, const FreezePolicy& policy, const std::filesystem::path& out_dir,
                      std::ostream* log);

}  // namespace mtkd
