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

// Experiment configuration: one JSON document describing the synthetic world,
// the corpora, the student, both training stages and the freezing policy.
// Every toggle of an ablation (tap depth, augmentation, kd_aux, freeze_sv,
// loss weights, corpus repeats) is a field here.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtkd/datapipe.h"
#include "mtkd/model.h"
#include "mtkd/trainer.h"

namespace mtkd {

enum class CorpusRole { kPretrain, kFinetune, kDev, kTest };
std::string_view role_name(CorpusRole role);

struct CorpusEntry {
  CorpusRole role = CorpusRole::kPretrain;
  SynthCorpusConfig synth;  // synth.seed is overwritten by the experiment seed
  std::size_t repeat = 1;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "run";
  SynthWorld world;  // world.seed follows `seed`
  std::vector<CorpusEntry> corpora;
  ModelConfig model;
  StageConfig pretrain;
  StageConfig finetune;
  FreezePolicy freeze;

  // Throws ConfigError naming the offending field.
  void validate() const;
  // Propagates `seed` to the world and the corpus generators.
  void set_seed(std::uint64_t s);

  std::vector<const CorpusEntry*> corpora_with(CorpusRole role) const;
  std::vector<const CorpusEntry*> corpora_with(CorpusRole role, Task task) const;
  std::filesystem::path manifest_path(const CorpusEntry& c) const;
  std::filesystem::path shard_path(const CorpusEntry& c) const;
  // Teacher output width for a task.
  std::size_t teacher_dim(Task task) const;
};

// Desk-scale experiment: 6-block, 64-wide student on synthetic tri-task
// corpora, sized to finish the whole pipeline in a few minutes on one core.
ExperimentConfig desk_config();

// Fields absent from the document keep their desk_config() value; unknown
// fields, wrong types and invalid values throw ConfigError with a path such
// as "config.pretrain.base_lr".
ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

}  // namespace mtkd
