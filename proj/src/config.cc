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

#include "mtkd/config.h"

#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include "mtkd/error.h"

namespace mtkd {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view role_name(CorpusRole role) {
  switch (role) {
    case CorpusRole::kPretrain: return "pretrain";
    case CorpusRole::kFinetune: return "finetune";
    case CorpusRole::kDev: return "dev";
    case CorpusRole::kTest: return "test";
  }
  return "?";
}

namespace {

CorpusRole parse_role(std::string_view s) {
  for (CorpusRole r : {CorpusRole::kPretrain, CorpusRole::kFinetune, CorpusRole::kDev, CorpusRole::kTest})
    if (role_name(r) == s) return r;
  throw ConfigError("unknown corpus role '" + std::string(s) + "' (expected pretrain, finetune, dev or test)");
}

// +inf is written as null.
struct MaybeInfinite {
  double* value;
};

std::string kind_of(const json& j) {
  if (j.is_null()) return "null";
  if (j.is_boolean()) return "boolean";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  return "object";
}

[[noreturn]] void type_error(const std::string& path, const char* want, const json& got) {
  throw ConfigError(path + ": expected " + want + ", got " + kind_of(got));
}

void read_value(const json& j, const std::string& path, bool& out) {
  if (!j.is_boolean()) type_error(path, "boolean", j);
  out = j.get<bool>();
}

void read_value(const json& j, const std::string& path, double& out) {
  if (!j.is_number()) type_error(path, "number", j);
  out = j.get<double>();
}

void read_value(const json& j, const std::string& path, MaybeInfinite out) {
  if (j.is_null()) {
    *out.value = INFINITY;
    return;
  }
  read_value(j, path, *out.value);
}

void read_value(const json& j, const std::string& path, std::uint64_t& out) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
    type_error(path, "non-negative integer", j);
  }
  out = j.get<std::uint64_t>();
}

void read_value(const json& j, const std::string& path, std::string& out) {
  if (!j.is_string()) type_error(path, "string", j);
  out = j.get<std::string>();
}

void read_value(const json& j, const std::string& path, fs::path& out) {
  std::string s;
  read_value(j, path, s);
  out = s;
}

template <typename E, typename Parse>
void read_enum(const json& j, const std::string& path, E& out, Parse parse) {
  std::string s;
  read_value(j, path, s);
  try {
    out = parse(s);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void read_value(const json& j, const std::string& path, Task& out) { read_enum(j, path, out, parse_task); }
void read_value(const json& j, const std::string& path, CorpusRole& out) { read_enum(j, path, out, parse_role); }

json write_value(bool v) { return v; }
json write_value(double v) { return v; }
json write_value(MaybeInfinite v) { return std::isinf(*v.value) && *v.value > 0 ? json(nullptr) : json(*v.value); }
json write_value(std::uint64_t v) { return v; }
json write_value(const std::string& v) { return v; }
json write_value(const fs::path& v) { return v.string(); }
json write_value(Task v) { return std::string(task_name(v)); }
json write_value(CorpusRole v) { return std::string(role_name(v)); }

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) type_error(path_, "object", j_);
  }

  template <typename T>
  void field(const char* key, T&& out) {
    seen_.insert(key);
    if (j_.contains(key)) read_value(j_.at(key), path_ + "." + key, out);
  }

  template <typename F>
  void object(const char* key, F&& visit) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Reader sub(j_.at(key), path_ + "." + key);
    visit(sub);
    sub.finish();
  }

  template <typename T, typename F>
  void list(const char* key, std::vector<T>& out, F&& visit) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& arr = j_.at(key);
    if (!arr.is_array()) type_error(path_ + "." + key, "array", arr);
    out.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Reader sub(arr[i], path_ + "." + key + "[" + std::to_string(i) + "]");
      out.emplace_back();
      visit(sub, out.back());
      sub.finish();
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(path_ + "." + k + ": unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  explicit Writer(json& j) : j_(j) {}

  template <typename T>
  void field(const char* key, T&& v) {
    j_[key] = write_value(v);
  }

  template <typename F>
  void object(const char* key, F&& visit) {
    json sub = json::object();
    Writer w(sub);
    visit(w);
    j_[key] = std::move(sub);
  }

  template <typename T, typename F>
  void list(const char* key, std::vector<T>& items, F&& visit) {
    json arr = json::array();
    for (T& item : items) {
      json sub = json::object();
      Writer w(sub);
      visit(w, item);
      arr.push_back(std::move(sub));
    }
    j_[key] = std::move(arr);
  }

 private:
  json& j_;
};

template <typename V>
void visit_world(V& v, SynthWorld& w) {
  v.field("feature_dim", w.feature_dim);
  v.field("vocab", w.vocab);
  v.field("num_classes", w.num_classes);
  v.field("noise_std", w.noise_std);
  v.field("token_scale", w.token_scale);
  v.field("event_scale", w.event_scale);
}

template <typename V>
void visit_corpus(V& v, CorpusEntry& c) {
  v.field("role", c.role);
  v.field("name", c.synth.name);
  v.field("task", c.synth.task);
  v.field("n_utts", c.synth.n_utts);
  v.field("speaker_base", c.synth.speaker_base);
  v.field("num_speakers", c.synth.num_speakers);
  v.field("speaker_scale", c.synth.speaker_scale);
  v.field("min_tokens", c.synth.min_tokens);
  v.field("max_tokens", c.synth.max_tokens);
  v.field("min_frames", c.synth.min_frames);
  v.field("max_frames", c.synth.max_frames);
  v.field("event_prob", c.synth.event_prob);
  v.field("repeat", c.repeat);
}

template <typename V>
void visit_model(V& v, ModelConfig& m) {
  v.object("encoder", [&](auto& e) {
    e.field("num_blocks", m.encoder.num_blocks);
    e.field("model_dim", m.encoder.model_dim);
    e.field("ffn_dim", m.encoder.ffn_dim);
    e.field("attn_heads", m.encoder.attn_heads);
    e.field("frontend_subsample", m.encoder.frontend_subsample);
    e.field("input_dim", m.encoder.input_dim);
    e.field("frontend_channels", m.encoder.frontend_channels);
  });
  v.object("heads", [&](auto& h) {
    h.field("teacher_dim", m.heads.teacher_dim);
    h.field("num_classes", m.heads.num_classes);
    h.field("sv_embed_dim", m.heads.sv_embed_dim);
    h.field("sv_pool_dim", m.heads.sv_pool_dim);
    h.field("sv_kernel", m.heads.sv_kernel);
    h.field("vocab", m.heads.vocab);
    h.field("predictor_dim", m.heads.predictor_dim);
    h.field("joiner_dim", m.heads.joiner_dim);
    h.field("num_speakers", m.heads.num_speakers);
  });
  v.object("taps", [&](auto& t) {
    t.field("asr", m.tap_asr);
    t.field("at", m.tap_at);
    t.field("sv", m.tap_sv);
  });
}

template <typename V>
void visit_stage(V& v, StageConfig& s) {
  v.object("weights", [&](auto& w) {
    w.field("asr", s.weights.asr);
    w.field("at", s.weights.at);
    w.field("sv", s.weights.sv);
  });
  v.object("kd_aux", [&](auto& k) {
    k.field("asr", s.kd_aux.asr);
    k.field("at", s.kd_aux.at);
    k.field("sv", s.kd_aux.sv);
  });
  v.field("epochs", s.epochs);
  v.field("max_steps", s.max_steps);
  v.field("base_lr", s.base_lr);
  v.field("warmup_steps", s.warmup_steps);
  v.field("checkpoint_interval", s.checkpoint_interval);
  v.field("average_last_k", s.average_last_k);
  v.field("frame_budget", s.frame_budget);
  v.field("grad_clip", s.grad_clip);
  v.object("augment", [&](auto& a) {
    a.object("spec", [&](auto& p) {
      p.field("n_time_masks", s.augment.spec.n_time_masks);
      p.field("min_time_width", s.augment.spec.min_time_width);
      p.field("max_time_width", s.augment.spec.max_time_width);
      p.field("n_freq_masks", s.augment.spec.n_freq_masks);
      p.field("min_freq_width", s.augment.spec.min_freq_width);
      p.field("max_freq_width", s.augment.spec.max_freq_width);
    });
    a.field("noise_snr_db", MaybeInfinite{&s.augment.noise_snr_db});
    a.field("noise_segments", s.augment.noise_segments);
    a.field("noise_frames", s.augment.noise_frames);
  });
  v.object("adam", [&](auto& a) {
    a.field("beta1", s.adam.beta1);
    a.field("beta2", s.adam.beta2);
    a.field("eps", s.adam.eps);
  });
}

template <typename V>
void visit_experiment(V& v, ExperimentConfig& c) {
  v.field("seed", c.seed);
  v.field("out_dir", c.out_dir);
  v.object("world", [&](auto& w) { visit_world(w, c.world); });
  v.list("corpora", c.corpora, [](auto& sub, CorpusEntry& e) { visit_corpus(sub, e); });
  v.object("model", [&](auto& m) { visit_model(m, c.model); });
  v.object("pretrain", [&](auto& s) { visit_stage(s, c.pretrain); });
  v.object("finetune", [&](auto& s) { visit_stage(s, c.finetune); });
  v.object("freeze", [&](auto& f) {
    f.field("encoder_warmup_steps", c.freeze.encoder_warmup_steps);
    f.field("freeze_sv", c.freeze.freeze_sv);
    f.field("encoder_lr_scale", c.freeze.encoder_lr_scale);
  });
}

template <typename F>
void with_prefix(const std::string& prefix, F&& check) {
  try {
    check();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ConfigError(prefix + ": " + e.what());
  } catch (const ContractError& e) {
    throw ConfigError(prefix + ": " + e.what());
  }
}

bool safe_name(const std::string& s) {
  if (s.empty() || s[0] == '.') return false;
  for (char ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) return false;
  return true;
}

}  // namespace

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  world.seed = s;
  for (CorpusEntry& c : corpora) c.synth.seed = s;
}

void ExperimentConfig::validate() const {
  with_prefix("config.model", [&] { model.validate(); });
  with_prefix("config.pretrain", [&] { pretrain.validate(); });
  with_prefix("config.finetune", [&] { finetune.validate(); });
  with_prefix("config.freeze", [&] { freeze.validate(); });
  if (pretrain.stage != Stage::kPretrain || finetune.stage != Stage::kFinetune) {
    throw ConfigError("config: stage sections are mislabelled");
  }
  if (world.feature_dim != model.encoder.input_dim) {
    throw ConfigError("config.model.encoder.input_dim: must equal config.world.feature_dim (" +
                      std::to_string(world.feature_dim) + ")");
  }
  if (world.vocab != model.heads.vocab) {
    throw ConfigError("config.model.heads.vocab: must equal config.world.vocab (" + std::to_string(world.vocab) + ")");
  }
  if (world.num_classes != model.heads.num_classes) {
    throw ConfigError("config.model.heads.num_classes: must equal config.world.num_classes (" +
                      std::to_string(world.num_classes) + ")");
  }
  if (out_dir.empty()) throw ConfigError("config.out_dir: must not be empty");
  std::set<std::string> names;
  for (std::size_t i = 0; i < corpora.size(); ++i) {
    const CorpusEntry& c = corpora[i];
    const std::string path = "config.corpora[" + std::to_string(i) + "]";
    if (!safe_name(c.synth.name)) {
      throw ConfigError(path + ".name: '" + c.synth.name + "' must be non-empty and use only [A-Za-z0-9._-]");
    }
    if (!names.insert(c.synth.name).second) throw ConfigError(path + ".name: duplicate corpus '" + c.synth.name + "'");
    if (c.synth.n_utts < 1) throw ConfigError(path + ".n_utts: must be >= 1");
    if (c.repeat < 1) throw ConfigError(path + ".repeat: must be >= 1");
    if (!(c.synth.event_prob >= 0.0 && c.synth.event_prob <= 1.0)) {
      throw ConfigError(path + ".event_prob: must be in [0, 1]");
    }
    with_prefix(path, [&] { c.synth.validate(); });
    if (c.synth.task == Task::kAt && c.synth.min_frames < model.encoder.min_input_frames()) {
      throw ConfigError(path + ".min_frames: the encoder needs at least " +
                        std::to_string(model.encoder.min_input_frames()) + " frames");
    }
    if (c.role == CorpusRole::kFinetune && c.synth.task == Task::kSv && c.synth.num_speakers > model.heads.num_speakers) {
      throw ConfigError(path + ".num_speakers: exceeds config.model.heads.num_speakers (" +
                        std::to_string(model.heads.num_speakers) + ")");
    }
  }
  if (corpora_with(CorpusRole::kPretrain).empty()) throw ConfigError("config.corpora: no pretrain corpus");
  if (corpora_with(CorpusRole::kFinetune).empty()) throw ConfigError("config.corpora: no finetune corpus");
}

std::vector<const CorpusEntry*> ExperimentConfig::corpora_with(CorpusRole role) const {
  std::vector<const CorpusEntry*> out;
  for (const CorpusEntry& c : corpora)
    if (c.role == role) out.push_back(&c);
  return out;
}

std::vector<const CorpusEntry*> ExperimentConfig::corpora_with(CorpusRole role, Task task) const {
  std::vector<const CorpusEntry*> out;
  for (const CorpusEntry* c : corpora_with(role))
    if (c->synth.task == task) out.push_back(c);
  return out;
}

fs::path ExperimentConfig::manifest_path(const CorpusEntry& c) const {
  return out_dir / "data" / (c.synth.name + ".json");
}

fs::path ExperimentConfig::shard_path(const CorpusEntry& c) const {
  return out_dir / "labels" / (c.synth.name + ".shard");
}

std::size_t ExperimentConfig::teacher_dim(Task task) const {
  switch (task) {
    case Task::kAsr: return model.heads.teacher_dim;
    case Task::kAt: return model.heads.num_classes;
    case Task::kSv: return model.heads.sv_embed_dim;
  }
  return 0;
}

ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.out_dir = "run";
  c.world.vocab = 16;
  c.world.num_classes = 8;
  c.world.event_scale = 0.6;
  c.model.heads.vocab = 16;
  c.model.heads.num_classes = 8;
  c.model.heads.num_speakers = 16;

  auto add = [&](CorpusRole role, const char* name, Task task, std::size_t n, std::size_t base, std::size_t speakers) {
    CorpusEntry e;
    e.role = role;
    e.synth.name = name;
    e.synth.task = task;
    e.synth.n_utts = n;
    e.synth.speaker_base = base;
    e.synth.num_speakers = speakers;
    if (task == Task::kSv) e.synth.speaker_scale = 1.0;
    c.corpora.push_back(e);
  };
  add(CorpusRole::kPretrain, "pre-asr", Task::kAsr, 400, 0, 8);
  add(CorpusRole::kPretrain, "pre-at", Task::kAt, 400, 0, 8);
  add(CorpusRole::kPretrain, "pre-sv", Task::kSv, 400, 1000, 200);
  add(CorpusRole::kFinetune, "ft-asr", Task::kAsr, 150, 0, 8);
  add(CorpusRole::kFinetune, "ft-at", Task::kAt, 150, 0, 8);
  add(CorpusRole::kFinetune, "ft-sv", Task::kSv, 150, 0, 16);
  add(CorpusRole::kDev, "dev-asr", Task::kAsr, 40, 0, 8);
  add(CorpusRole::kTest, "test-asr", Task::kAsr, 60, 100, 8);
  add(CorpusRole::kTest, "test-at", Task::kAt, 100, 0, 8);
  add(CorpusRole::kTest, "test-sv", Task::kSv, 80, 200, 10);

  c.pretrain.stage = Stage::kPretrain;
  c.pretrain.epochs = 100;
  c.pretrain.max_steps = 1500;
  c.pretrain.base_lr = 3e-3;
  c.pretrain.warmup_steps = 50;
  c.pretrain.checkpoint_interval = 50;
  c.pretrain.average_last_k = 10;
  c.pretrain.frame_budget = 256;

  c.finetune.stage = Stage::kFinetune;
  c.finetune.epochs = 100;
  c.finetune.max_steps = 800;
  c.finetune.base_lr = 4e-3;
  c.finetune.warmup_steps = 30;
  c.finetune.checkpoint_interval = 50;
  c.finetune.average_last_k = 10;
  c.finetune.frame_budget = 256;

  c.freeze.encoder_warmup_steps = 50;
  c.freeze.freeze_sv = true;
  c.freeze.encoder_lr_scale = 0.2;
  c.set_seed(1);
  return c;
}

ExperimentConfig parse_experiment_config(const json& doc) {
  ExperimentConfig c = desk_config();
  Reader r(doc, "config");
  visit_experiment(r, c);
  r.finish();
  c.model.heads.model_dim = c.model.encoder.model_dim;
  c.set_seed(c.seed);
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_experiment_config(doc);
}

json to_json(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  json j = json::object();
  Writer w(j);
  visit_experiment(w, c);
  return j;
}

}  // namespace mtkd
