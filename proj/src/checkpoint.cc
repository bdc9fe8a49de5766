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

#include "mtkd/checkpoint.h"

#include <unordered_map>
#include <unordered_set>

#include "mtkd/error.h"
#include "mtkd/records.h"

namespace mtkd {

namespace {

constexpr const char* kParamPrefix = "param:";
constexpr const char* kMomentMPrefix = "adam_m:";
constexpr const char* kMomentVPrefix = "adam_v:";
constexpr const char* kAdamStepsPrefix = "adam_steps:";

std::size_t numel(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

std::vector<std::uint32_t> dims_of(const Shape& shape) {
  return std::vector<std::uint32_t>(shape.begin(), shape.end());
}

CheckpointEntry f64_entry(std::string name, std::string group, const Shape& shape, std::vector<double> values) {
  CheckpointEntry e;
  e.name = std::move(name);
  e.group = std::move(group);
  e.kind = EntryKind::kF64;
  e.dims = dims_of(shape);
  e.f64 = std::move(values);
  return e;
}

CheckpointEntry u64_entry(std::string name, std::vector<std::uint64_t> values) {
  CheckpointEntry e;
  e.name = std::move(name);
  e.group = "state";
  e.kind = EntryKind::kU64;
  e.dims = {static_cast<std::uint32_t>(values.size())};
  e.u64 = std::move(values);
  return e;
}

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const CheckpointEntry& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter out;
  write_preamble(out, RecordTag::kCheckpoint);
  out.u8(0);
  std::unordered_set<std::string_view> seen;
  for (const CheckpointEntry& e : ckpt.entries) {
    if (!seen.insert(e.name).second) throw DataError("duplicate checkpoint entry '" + e.name + "'");
    const std::size_t n = numel(e.dims);
    if ((e.kind == EntryKind::kF64 ? e.f64.size() : e.u64.size()) != n) {
      throw ShapeError("checkpoint entry '" + e.name + "' payload does not match its dims");
    }
    out.str16(e.name);
    out.str16(e.group);
    out.u8(static_cast<std::uint8_t>(e.kind));
    out.u8(static_cast<std::uint8_t>(e.dims.size()));
    for (std::uint32_t d : e.dims) out.u32(d);
    if (e.kind == EntryKind::kF64) {
      for (double v : e.f64) out.f64(v);
    } else {
      for (std::uint64_t v : e.u64) out.u64(v);
    }
  }
  return out.take();
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source) {
  ByteReader in(bytes, source);
  if (read_preamble(in) != RecordTag::kCheckpoint) in.fail("not a checkpoint file");
  if (in.u8() != 0) in.fail("checkpoint header rank must be 0");
  Checkpoint ckpt;
  std::unordered_set<std::string> seen;
  while (!in.at_end()) {
    CheckpointEntry e;
    e.name = in.str16();
    if (!seen.insert(e.name).second) in.fail("duplicate checkpoint entry '" + e.name + "'");
    e.group = in.str16();
    const std::uint8_t kind = in.u8();
    if (kind > 1) in.fail("unknown entry kind " + std::to_string(kind));
    e.kind = static_cast<EntryKind>(kind);
    const std::uint8_t rank = in.u8();
    for (std::uint8_t i = 0; i < rank; ++i) e.dims.push_back(in.u32());
    const std::size_t n = numel(e.dims);
    if (e.kind == EntryKind::kF64) {
      e.f64.resize(n);
      for (double& v : e.f64) v = in.f64();
    } else {
      e.u64.resize(n);
      for (std::uint64_t& v : e.u64) v = in.u64();
    }
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

Checkpoint make_checkpoint(Model& model, const TrainState& state) {
  Checkpoint c;
  model.visit([&](Parameter& p) {
    c.entries.push_back(f64_entry(kParamPrefix + p.name, p.group, p.value.shape(), p.value.vec()));
  });
  model.visit([&](Parameter& p) {
    std::vector<double> m = p.m.empty() ? std::vector<double>(p.size(), 0.0) : p.m;
    std::vector<double> v = p.v.empty() ? std::vector<double>(p.size(), 0.0) : p.v;
    c.entries.push_back(f64_entry(kMomentMPrefix + p.name, p.group, p.value.shape(), std::move(m)));
    c.entries.push_back(f64_entry(kMomentVPrefix + p.name, p.group, p.value.shape(), std::move(v)));
  });
  const ModelConfig& mc = model.config;
  c.entries.push_back(u64_entry("config:taps", {mc.tap_asr, mc.tap_at, mc.tap_sv}));
  c.entries.push_back(u64_entry("state:step", {state.step}));
  c.entries.push_back(u64_entry("state:epoch", {state.epoch}));
  c.entries.push_back(u64_entry("state:seed", {state.seed}));
  c.entries.push_back(u64_entry("state:sampler_epoch", {state.sampler.epoch}));
  c.entries.push_back(u64_entry("state:sampler_cursors", state.sampler.cursors));
  c.entries.push_back(u64_entry("state:sampler_rng", {state.sampler.rng_counter}));
  for (const auto& [group, n] : state.adam_steps) c.entries.push_back(u64_entry(kAdamStepsPrefix + group, {n}));
  return c;
}

namespace {

const CheckpointEntry& require(const Checkpoint& c, const std::string& name, EntryKind kind) {
  const CheckpointEntry* e = c.find(name);
  if (!e) throw FormatError("checkpoint has no entry '" + name + "'");
  if (e->kind != kind) throw FormatError("checkpoint entry '" + name + "' has the wrong kind");
  return *e;
}

std::uint64_t scalar_u64(const Checkpoint& c, const std::string& name) {
  const CheckpointEntry& e = require(c, name, EntryKind::kU64);
  if (e.u64.size() != 1) throw FormatError("checkpoint entry '" + name + "' is not a scalar");
  return e.u64[0];
}

void check_shape(const CheckpointEntry& e, const Parameter& p) {
  if (e.dims != dims_of(p.value.shape())) {
    Shape got(e.dims.begin(), e.dims.end());
    throw ShapeError("checkpoint parameter '" + p.name + "' has shape " + shape_str(got) +
                     " but the model expects " + shape_str(p.value.shape()));
  }
}

}  // namespace

void apply_checkpoint(const Checkpoint& ckpt, Model& model, TrainState* state, LoadMode mode) {
  const CheckpointEntry& taps = require(ckpt, "config:taps", EntryKind::kU64);
  const ModelConfig& mc = model.config;
  if (taps.u64 != std::vector<std::uint64_t>{mc.tap_asr, mc.tap_at, mc.tap_sv}) {
    throw ConfigError("checkpoint was trained with different encoder tap indices");
  }
  // Validate everything before modifying the model.
  std::unordered_set<std::string> known;
  model.visit([&](Parameter& p) {
    known.insert(kParamPrefix + p.name);
    const CheckpointEntry* e = ckpt.find(kParamPrefix + p.name);
    if (!e) {
      const bool new_head = p.group == "transducer" || p.group == "sv_classifier";
      if (mode == LoadMode::kResume || !new_head) {
        throw ShapeError("checkpoint has no parameter '" + p.name + "'; the model configuration differs");
      }
      return;
    }
    check_shape(*e, p);
    if (mode == LoadMode::kResume) {
      check_shape(require(ckpt, kMomentMPrefix + p.name, EntryKind::kF64), p);
      check_shape(require(ckpt, kMomentVPrefix + p.name, EntryKind::kF64), p);
    }
  });
  for (const CheckpointEntry& e : ckpt.entries) {
    if (starts_with(e.name, kParamPrefix) && !known.count(e.name)) {
      throw ShapeError("checkpoint parameter '" + e.name.substr(6) + "' does not exist in the model");
    }
  }
  model.visit([&](Parameter& p) {
    const CheckpointEntry* e = ckpt.find(kParamPrefix + p.name);
    if (!e) {
      p.m.assign(p.size(), 0.0);
      p.v.assign(p.size(), 0.0);
      return;
    }
    p.value.vec() = e->f64;
    if (mode == LoadMode::kResume) {
      p.m = ckpt.find(kMomentMPrefix + p.name)->f64;
      p.v = ckpt.find(kMomentVPrefix + p.name)->f64;
    } else {
      p.m.assign(p.size(), 0.0);
      p.v.assign(p.size(), 0.0);
    }
  });
  if (state && mode == LoadMode::kResume) {
    TrainState s;
    s.step = scalar_u64(ckpt, "state:step");
    s.epoch = scalar_u64(ckpt, "state:epoch");
    s.seed = scalar_u64(ckpt, "state:seed");
    s.sampler.epoch = scalar_u64(ckpt, "state:sampler_epoch");
    s.sampler.cursors = require(ckpt, "state:sampler_cursors", EntryKind::kU64).u64;
    s.sampler.rng_counter = scalar_u64(ckpt, "state:sampler_rng");
    for (const CheckpointEntry& e : ckpt.entries) {
      if (starts_with(e.name, kAdamStepsPrefix)) {
        s.adam_steps[e.name.substr(std::string(kAdamStepsPrefix).size())] = scalar_u64(ckpt, e.name);
      }
    }
    *state = std::move(s);
  }
}

void save_checkpoint(const std::filesystem::path& path, Model& model, const TrainState& state) {
  write_checkpoint(path, make_checkpoint(model, state));
}

void load_checkpoint(const std::filesystem::path& path, Model& model, TrainState* state, LoadMode mode) {
  apply_checkpoint(read_checkpoint(path), model, state, mode);
}

Checkpoint average_checkpoints(const std::vector<Checkpoint>& ckpts) {
  if (ckpts.empty()) throw ContractError("average_checkpoints: need at least one checkpoint");
  Checkpoint out = ckpts.back();
  for (CheckpointEntry& e : out.entries) {
    if (starts_with(e.name, kMomentMPrefix) || starts_with(e.name, kMomentVPrefix)) {
      std::fill(e.f64.begin(), e.f64.end(), 0.0);
    } else if (starts_with(e.name, kAdamStepsPrefix)) {
      std::fill(e.u64.begin(), e.u64.end(), 0);
    } else if (starts_with(e.name, kParamPrefix)) {
      std::vector<double> mean(e.f64.size(), 0.0);
      for (std::size_t k = 0; k < ckpts.size(); ++k) {
        const CheckpointEntry* src = ckpts[k].find(e.name);
        if (!src || src->dims != e.dims || src->kind != EntryKind::kF64) {
          throw ShapeError("average_checkpoints: parameter '" + e.name.substr(6) + "' is missing or has a " +
                           "different shape in checkpoint " + std::to_string(k));
        }
        const double inv = 1.0 / static_cast<double>(k + 1);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += (src->f64[i] - mean[i]) * inv;
      }
      e.f64 = std::move(mean);
    }
  }
  for (std::size_t k = 0; k + 1 < ckpts.size(); ++k) {
    for (const CheckpointEntry& e : ckpts[k].entries) {
      if (starts_with(e.name, kParamPrefix) && !out.find(e.name)) {
        throw ShapeError("average_checkpoints: parameter '" + e.name.substr(6) + "' is absent from the newest checkpoint");
      }
    }
  }
  return out;
}

Checkpoint average_checkpoint_files(const std::vector<std::filesystem::path>& paths) {
  std::vector<Checkpoint> ckpts;
  ckpts.reserve(paths.size());
  for (const auto& p : paths) ckpts.push_back(read_checkpoint(p));
  return average_checkpoints(ckpts);
}

}  // namespace mtkd
