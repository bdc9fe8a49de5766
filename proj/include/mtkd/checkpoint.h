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

// Training state and its on-disk checkpoint form.
//
// Checkpoint file: the shard preamble with tag 0xC0, a zero header rank, then
// entries until EOF:
//   name str16 | group str16 | kind u8 | rank u8 | dims u32 x rank | payload
// kind 0 holds f64 values, kind 1 u64 values. Parameters are stored in full
// 64-bit precision so a save/load cycle is exact.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mtkd/datapipe.h"
#include "mtkd/model.h"

namespace mtkd {

struct TrainState {
  std::uint64_t step = 0;   // optimizer steps taken
  std::uint64_t epoch = 0;  // completed sampler epochs in the current stage
  std::uint64_t seed = 0;
  SamplerState sampler;
  std::map<std::string, std::uint64_t> adam_steps;  // updates applied per group

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

enum class EntryKind : std::uint8_t { kF64 = 0, kU64 = 1 };

struct CheckpointEntry {
  std::string name;
  std::string group;
  EntryKind kind = EntryKind::kF64;
  std::vector<std::uint32_t> dims;
  std::vector<double> f64;
  std::vector<std::uint64_t> u64;

  friend bool operator==(const CheckpointEntry&, const CheckpointEntry&) = default;
};

struct Checkpoint {
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source = "<memory>");
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Parameters, Adam moments, tap indices and the training state.
Checkpoint make_checkpoint(Model& model, const TrainState& state);

enum class LoadMode {
  // Every model parameter must be present; moments and state are restored.
  kResume,
  // Copies the parameters the checkpoint has (new heads keep their fresh
  // values) and resets moments; the training state is left alone.
  kInitialize,
};

// Throws ShapeError when parameter names or shapes disagree with the model,
// ConfigError when the tap indices differ, FormatError when a state entry is
// missing.
void apply_checkpoint(const Checkpoint& ckpt, Model& model, TrainState* state, LoadMode mode);

void save_checkpoint(const std::filesystem::path& path, Model& model, const TrainState& state);
void load_checkpoint(const std::filesystem::path& path, Model& model, TrainState* state, LoadMode mode);

// Element-wise mean of the parameters (running mean, so identical inputs give
// identical output); moments and per-group update counts reset to zero; every
// other entry is taken from the last checkpoint.
Checkpoint average_checkpoints(const std::vector<Checkpoint>& ckpts);
Checkpoint average_checkpoint_files(const std::vector<std::filesystem::path>& paths);

}  // namespace mtkd
