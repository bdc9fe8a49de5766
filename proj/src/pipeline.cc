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

#include "mtkd/pipeline.h"

#include <algorithm>
#include <fstream>

#include "mtkd/checkpoint.h"
#include "mtkd/error.h"

namespace mtkd {

namespace fs = std::filesystem;

namespace {

bool is_checkpoint_file(const fs::path& p) {
  const std::string name = p.filename().string();
  return name.starts_with("ckpt-") && name.ends_with(".bin");
}

std::vector<fs::path> checkpoints_in(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_checkpoint_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

void clear_stage(const fs::path& dir) {
  for (const fs::path& p : checkpoints_in(dir)) fs::remove(p);
  fs::remove(dir / "log.jsonl");
}

Corpus load_corpus(const ExperimentConfig& cfg, const CorpusEntry& c) { return read_corpus(cfg.manifest_path(c)); }

std::vector<Tensor> load_targets(const ExperimentConfig& cfg, const CorpusEntry& c, const Corpus& corpus) {
  const fs::path shard = cfg.shard_path(c);
  if (!fs::exists(shard)) {
    throw DataError("missing teacher labels for corpus '" + c.synth.name + "' (" + shard.string() + "); run extract");
  }
  return align_teacher_targets(corpus, read_shard(shard));
}

std::vector<TrainingCorpus> training_data(const ExperimentConfig& cfg, CorpusRole role, const KdAux& kd_aux,
                                          bool all_teachers) {
  std::vector<TrainingCorpus> data;
  for (const CorpusEntry* c : cfg.corpora_with(role)) {
    TrainingCorpus tc;
    tc.corpus = load_corpus(cfg, *c);
    if (all_teachers || kd_aux[c->synth.task]) tc.teacher = load_targets(cfg, *c, tc.corpus);
    tc.repeat = c->repeat;
    data.push_back(std::move(tc));
  }
  return data;
}

StageResult run_logged(Model& model, TrainState& state, const std::vector<TrainingCorpus>& data,
                       const StageConfig& stage, const FreezePolicy& policy, const fs::path& dir,
                       bool resuming) {
  fs::create_directories(dir);
  if (!resuming) clear_stage(dir);
  std::ofstream log(dir / "log.jsonl", std::ios::app);
  if (!log) throw DataError("cannot open " + (dir / "log.jsonl").string());
  return run_stage(model, state, data, stage, policy, dir, &log);
}

const CorpusEntry& single_corpus(const ExperimentConfig& cfg, CorpusRole role, Task task, const std::string& metric) {
  const auto found = cfg.corpora_with(role, task);
  if (found.size() != 1) {
    throw ConfigError("config.corpora: " + metric + " needs exactly one " + std::string(role_name(role)) + " " +
                      std::string(task_name(task)) + " corpus, found " + std::to_string(found.size()));
  }
  return *found.front();
}

}  // namespace

void cmd_gen_data(const ExperimentConfig& cfg) {
  cfg.validate();
  for (const CorpusEntry& c : cfg.corpora) {
    SynthCorpusConfig synth = c.synth;
    synth.seed = cfg.seed;
    write_corpus(cfg.manifest_path(c), synth_corpus(cfg.world, synth));
  }
}

std::vector<fs::path> cmd_extract(const ExperimentConfig& cfg, const std::set<Task>& tasks) {
  cfg.validate();
  std::vector<fs::path> written;
  for (const CorpusEntry& c : cfg.corpora) {
    if (!tasks.empty() && !tasks.count(c.synth.task)) continue;
    const Corpus corpus = load_corpus(cfg, c);
    const SynthTeacher teacher(c.synth.task, cfg.world, cfg.teacher_dim(c.synth.task), cfg.seed);
    written.push_back(cfg.shard_path(c));
    write_shard(written.back(), extract_labels(corpus, teacher));
  }
  return written;
}

fs::path stage_dir(const ExperimentConfig& cfg, Stage stage, bool initialized) {
  if (stage == Stage::kPretrain) return cfg.out_dir / "pretrain";
  return cfg.out_dir / (initialized ? "finetune" : "scratch");
}

StageResult cmd_pretrain(const ExperimentConfig& cfg, const std::optional<fs::path>& resume) {
  cfg.validate();
  Model model = model_init(cfg.model, cfg.seed);
  TrainState state;
  state.seed = cfg.seed;
  if (resume) load_checkpoint(*resume, model, &state, LoadMode::kResume);
  const auto data = training_data(cfg, CorpusRole::kPretrain, {}, true);
  return run_logged(model, state, data, cfg.pretrain, cfg.freeze, stage_dir(cfg, Stage::kPretrain),
                    resume.has_value());
}

StageResult cmd_finetune(const ExperimentConfig& cfg, const std::optional<fs::path>& init,
                         const std::optional<fs::path>& resume) {
  cfg.validate();
  Model model = model_init(cfg.model, cfg.seed);
  add_finetune_heads(model, cfg.seed);
  TrainState state;
  state.seed = cfg.seed;
  if (resume) {
    load_checkpoint(*resume, model, &state, LoadMode::kResume);
  } else if (init) {
    load_checkpoint(*init, model, &state, LoadMode::kInitialize);
  }
  StageConfig stage = cfg.finetune;
  FreezePolicy policy = cfg.freeze;
  if (!init) {
    stage.kd_aux = {};
    policy.encoder_warmup_steps = 0;
    policy.freeze_sv = false;
    policy.encoder_lr_scale = 1.0;
  }
  const auto data = training_data(cfg, CorpusRole::kFinetune, stage.kd_aux, false);
  return run_logged(model, state, data, stage, policy, stage_dir(cfg, Stage::kFinetune, init.has_value()),
                    resume.has_value());
}

fs::path cmd_avg(const std::vector<fs::path>& inputs, std::size_t k, const fs::path& out) {
  if (k < 1) throw ConfigError("avg-ckpt: k must be >= 1");
  std::vector<fs::path> files;
  for (const fs::path& in : inputs) {
    if (fs::is_directory(in)) {
      const auto found = checkpoints_in(in);
      files.insert(files.end(), found.begin(), found.end());
    } else {
      if (!fs::exists(in)) throw DataError("no such checkpoint: " + in.string());
      files.push_back(in);
    }
  }
  if (files.empty()) throw DataError("avg-ckpt: no checkpoints found");
  if (files.size() > k) files.erase(files.begin(), files.end() - static_cast<std::ptrdiff_t>(k));
  write_checkpoint(out, average_checkpoint_files(files));
  return out;
}

Model load_model(const ExperimentConfig& cfg, const fs::path& checkpoint) {
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  const bool finetuned = std::any_of(ckpt.entries.begin(), ckpt.entries.end(),
                                     [](const CheckpointEntry& e) { return e.group == "transducer"; });
  Model model = model_init(cfg.model, cfg.seed);
  if (finetuned) add_finetune_heads(model, cfg.seed);
  TrainState ignored;
  apply_checkpoint(ckpt, model, &ignored, LoadMode::kResume);
  return model;
}

EvalReport cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, const std::set<std::string>& metrics) {
  cfg.validate();
  for (const std::string& m : metrics)
    if (!kEvalMetrics.count(m)) throw ConfigError("unknown metric '" + m + "' (expected wer, map, eer or kd_l1)");
  Model model = load_model(cfg, checkpoint);
  EvalReport report;
  if (metrics.count("wer")) {
    if (!model.transducer) throw DataError("wer: checkpoint " + checkpoint.string() + " has no transducer head");
    report.wer = evaluate_wer(model, load_corpus(cfg, single_corpus(cfg, CorpusRole::kTest, Task::kAsr, "wer")));
  }
  if (metrics.count("map")) {
    report.map = evaluate_map(model, load_corpus(cfg, single_corpus(cfg, CorpusRole::kTest, Task::kAt, "map")));
  }
  if (metrics.count("eer")) {
    report.eer = evaluate_eer(model, load_corpus(cfg, single_corpus(cfg, CorpusRole::kTest, Task::kSv, "eer")));
  }
  if (metrics.count("kd_l1")) {
    const CorpusEntry& dev = single_corpus(cfg, CorpusRole::kDev, Task::kAsr, "kd_l1");
    const Corpus corpus = load_corpus(cfg, dev);
    report.kd_l1 = kd_l1_eval(model, corpus, load_targets(cfg, dev, corpus));
  }
  return report;
}

LossReport distillation_losses(const ExperimentConfig& cfg, Model& model, CorpusRole role, std::size_t limit) {
  const auto data = training_data(cfg, role, {}, true);
  std::vector<TrainSample> batch;
  for (const TrainingCorpus& c : data) {
    const std::size_t n = limit == 0 ? c.corpus.utterances.size() : std::min(limit, c.corpus.utterances.size());
    for (std::size_t i = 0; i < n; ++i) batch.push_back({&c.corpus.utterances[i], &c.teacher[i]});
  }
  if (batch.empty()) throw ConfigError("config.corpora: no " + std::string(role_name(role)) + " corpus");
  return evaluate_batch(model, batch, Stage::kPretrain, {}, cfg.pretrain.weights);
}

}  // namespace mtkd
