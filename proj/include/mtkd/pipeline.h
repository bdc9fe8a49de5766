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

// The experiment lifecycle behind the command-line tool: generate corpora,
// extract teacher labels, pre-train, fine-tune, average checkpoints, evaluate.
//
// Layout under config.out_dir:
//   data/<corpus>.json, data/<corpus>.features.bin
//   labels/<corpus>.shard
//   pretrain/  ckpt-*.bin, log.jsonl
//   finetune/  fine-tuning from a pre-trained initialization
//   scratch/   fine-tuning from random initialization without freezing

#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <vector>

#include "mtkd/config.h"
#include "mtkd/metrics.h"
#include "mtkd/trainer.h"

namespace mtkd {

// Writes every corpus and its manifest.
void cmd_gen_data(const ExperimentConfig& cfg);

// Teacher labels for every corpus of the given tasks (all tasks when empty).
// Returns the shard paths written.
std::vector<std::filesystem::path> cmd_extract(const ExperimentConfig& cfg, const std::set<Task>& tasks = {});

// Starts afresh (clearing earlier checkpoints of the stage) unless `resume`
// names a checkpoint to continue from.
StageResult cmd_pretrain(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& resume = {});

// With `init`, fine-tunes from that checkpoint under cfg.freeze into
// finetune/. Without it, trains the naive multi-task baseline from random
// initialization (no freezing, no kd_aux) into scratch/. `resume` continues
// either run from one of its checkpoints.
StageResult cmd_finetune(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& init,
                         const std::optional<std::filesystem::path>& resume = {});

std::filesystem::path stage_dir(const ExperimentConfig& cfg, Stage stage, bool initialized = true);

// `inputs` are checkpoint files or directories (searched for ckpt-*.bin).
// Averages the last k in name order and writes `out`.
std::filesystem::path cmd_avg(const std::vector<std::filesystem::path>& inputs, std::size_t k,
                              const std::filesystem::path& out);

// Metrics requested by name: "wer" (test ASR), "map" (test AT), "eer"
// (test SV), "kd_l1" (dev ASR against its teacher labels).
inline const std::set<std::string> kEvalMetrics = {"wer", "map", "eer", "kd_l1"};
EvalReport cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                    const std::set<std::string>& metrics);

// Model described by the config, with fine-tuning heads when the checkpoint
// has them, loaded from `checkpoint`.
Model load_model(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint);

// Distillation losses of `model` over the first `limit` utterances of every
// corpus with `role` (0: all), using the stored teacher labels.
LossReport distillation_losses(const ExperimentConfig& cfg, Model& model, CorpusRole role, std::size_t limit = 0);

}  // namespace mtkd
