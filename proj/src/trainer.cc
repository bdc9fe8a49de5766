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

#include "mtkd/trainer.h"

#include <cmath>
#include <cstdio>
#include <exception>
#include <memory>

#include <json.hpp>

#include "mtkd/error.h"
#include "mtkd/rng.h"

namespace mtkd {

std::string_view stage_name(Stage stage) { return stage == Stage::kPretrain ? "pretrain" : "finetune"; }

void FreezePolicy::validate() const {
  if (!(encoder_lr_scale > 0.0 && encoder_lr_scale <= 1.0)) {
    throw ConfigError("freeze.encoder_lr_scale must be in (0, 1], got " + std::to_string(encoder_lr_scale));
  }
}

void StageConfig::validate() const {
  weights.validate();
  if (average_last_k < 1) throw ConfigError("average_last_k must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw ConfigError("base_lr must be finite and >= 0");
  if (frame_budget < 1) throw ConfigError("frame_budget must be >= 1");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.eps > 0)) {
    throw ConfigError("adam: betas must be in [0, 1) and eps > 0");
  }
  if (std::isnan(augment.noise_snr_db) || augment.noise_snr_db == -INFINITY) {
    throw ConfigError("augment.noise_snr_db must be finite or +inf");
  }
  if (stage == Stage::kPretrain && (kd_aux.asr || kd_aux.at || kd_aux.sv)) {
    throw ConfigError("kd_aux only applies to fine-tuning");
  }
}

double lr_schedule(std::uint64_t step, double base_lr, std::size_t warmup) {
  if (warmup == 0) return base_lr;
  const double s = static_cast<double>(step), w = static_cast<double>(warmup);
  if (step <= warmup) return base_lr * s / w;
  return base_lr * std::sqrt(w / s);
}

namespace {

void check_finite(const std::vector<Parameter*>& group, const std::string& name) {
  for (const Parameter* p : group) {
    for (double g : p->grad) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in group '" + name + "' (parameter " + p->name + "); step rejected");
      }
    }
  }
}

}  // namespace

void adam_update(const std::vector<Parameter*>& group, const std::string& group_name, double lr, std::uint64_t t,
                 const AdamConfig& cfg) {
  if (t == 0) throw ContractError("adam_update: the update count is 1-based");
  for (const Parameter* p : group) {
    if (p->grad.size() != p->size()) {
      throw ShapeError("adam_update: gradient of " + p->name + " has " + std::to_string(p->grad.size()) +
                       " entries, parameter has " + std::to_string(p->size()));
    }
  }
  check_finite(group, group_name);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (Parameter* p : group) {
    if (p->m.size() != p->size()) p->m.assign(p->size(), 0.0);
    if (p->v.size() != p->size()) p->v.assign(p->size(), 0.0);
    std::vector<double>& w = p->value.vec();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = p->grad[i];
      p->m[i] = cfg.beta1 * p->m[i] + (1.0 - cfg.beta1) * g;
      p->v[i] = cfg.beta2 * p->v[i] + (1.0 - cfg.beta2) * g * g;
      w[i] -= lr * (p->m[i] / bc1) / (std::sqrt(p->v[i] / bc2) + cfg.eps);
    }
  }
}

Var sample_loss(const Binder& bind, Model& model, const UtteranceRecord& utt, const Tensor& features,
                const Tensor* teacher, Stage stage, const KdAux& kd_aux) {
  const LayerOutputs out = encoder_forward(bind, model.encoder, features);
  const bool use_kd = stage == Stage::kPretrain || kd_aux[utt.task];
  auto target = [&]() {
    if (!teacher) throw DataError("utterance '" + utt.id + "' has no teacher target");
    return bind.constant(*teacher);
  };
  auto require_head = [&](bool present, const char* what) {
    if (!present) throw ContractError(std::string("fine-tuning needs the ") + what);
  };
  Var rep = tap(out, model.config.tap(utt.task));
  switch (utt.task) {
    case Task::kAsr: {
      auto kd = [&] { return kd_asr_l1(target(), asr_project(bind, model.head_asr, rep)); };
      if (stage == Stage::kPretrain) return kd();
      if (!utt.transcript) throw DataError("utterance '" + utt.id + "' has no transcript");
      require_head(model.transducer.has_value(), "transducer head");
      Var pred = transducer_predict(bind, *model.transducer, *utt.transcript);
      Var loss = transducer_loss(transducer_joint(bind, *model.transducer, rep, pred), *utt.transcript);
      return kd_aux.asr ? add(loss, kd()) : loss;
    }
    case Task::kAt: {
      Var logits = at_logits(bind, model.head_at, rep);
      if (use_kd) return kd_at_bce(target(), logits);
      if (!utt.events) throw DataError("utterance '" + utt.id + "' has no event label");
      return at_bce_supervised(logits, *utt.events);
    }
    case Task::kSv: {
      Var emb = sv_embed(bind, model.head_sv, rep);
      if (use_kd) return kd_sv_cosine(target(), emb);
      if (!utt.speaker) throw DataError("utterance '" + utt.id + "' has no speaker label");
      require_head(model.sv_classifier.has_value(), "speaker classifier");
      return sv_cross_entropy(sv_classify(bind, *model.sv_classifier, emb), *utt.speaker);
    }
  }
  throw ContractError("unknown task");
}

bool group_trainable(const std::string& group, std::uint64_t step, const StageConfig& cfg,
                     const FreezePolicy& policy, const ModelConfig& model) {
  if (cfg.stage == Stage::kPretrain) return group != "transducer" && group != "sv_classifier";
  if (policy.freeze_sv) {
    if (group == "head_sv" || group == "sv_classifier" || group == "frontend") return false;
    for (std::size_t i = 1; i <= model.tap_sv; ++i)
      if (group == block_group(i)) return false;
  }
  if (is_encoder_group(group) && step < policy.encoder_warmup_steps) return false;
  if (group == "head_asr" && !cfg.kd_aux.asr) return false;
  return true;
}

namespace {

Tensor student_input(const UtteranceRecord& utt, const AugmentConfig& aug, const TrainState& state) {
  if (!aug.enabled()) return utt.features;
  const std::uint64_t seed = derive_key(derive_key(state.seed, state.step), utt.id);
  Tensor x = utt.features;
  if (aug.noise_snr_db != INFINITY) {
    SynthWorld noise_world;
    noise_world.seed = derive_key(state.seed, "noise-bank");
    noise_world.feature_dim = x.dim(1);
    x = noise_mix(x, synth_noise_bank(noise_world, aug.noise_segments, aug.noise_frames), aug.noise_snr_db, seed);
  }
  if (aug.spec.enabled()) {
    SpecAugmentPolicy p = aug.spec;
    p.max_time_width = std::min(p.max_time_width, x.dim(0));
    p.min_time_width = std::min(p.min_time_width, p.max_time_width);
    x = spec_augment(x, p, derive_key(seed, "spec"));
  }
  return x;
}

LossReport aggregate(Stage stage, const std::vector<SampleLoss>& samples, const LossWeights& w) {
  return stage == Stage::kPretrain ? kd_combined(samples, w) : naive_mtl_loss(samples, w);
}

}  // namespace

StepReport train_step(Model& model, TrainState& state, const std::vector<TrainSample>& batch,
                      const StageConfig& cfg, const FreezePolicy& policy) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  std::array<std::size_t, 3> counts{};
  for (const TrainSample& s : batch) ++counts[static_cast<std::size_t>(s.utterance->task)];
  std::array<double, 3> seeds{};
  for (Task t : kAllTasks) {
    const std::size_t k = static_cast<std::size_t>(t);
    if (counts[k] > 0) seeds[k] = cfg.weights[t] / static_cast<double>(counts[k]);
  }

  const std::uint64_t step = state.step;
  std::map<std::string, bool> trainable;
  std::map<std::string, std::vector<Parameter*>> groups;
  model.visit([&](Parameter& p) {
    p.zero_grad();
    if (!trainable.count(p.group)) trainable[p.group] = group_trainable(p.group, step, cfg, policy, model.config);
    if (trainable[p.group]) groups[p.group].push_back(&p);
  });
  const Binder::Predicate pred = [&trainable](const Parameter& p) { return trainable.at(p.group); };

  const std::size_t n = batch.size();
  std::vector<std::unique_ptr<Tape>> tapes(n);
  std::vector<SampleLoss> losses(n);
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      const TrainSample& s = batch[i];
      tapes[i] = std::make_unique<Tape>();
      const Binder bind(*tapes[i], pred);
      const Tensor x = student_input(*s.utterance, cfg.augment, state);
      Var loss = sample_loss(bind, model, *s.utterance, x, s.teacher, cfg.stage, cfg.kd_aux);
      losses[i] = {s.utterance->task, loss.value().item()};
      tapes[i]->backward(loss, seeds[static_cast<std::size_t>(s.utterance->task)]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
  for (std::size_t i = 0; i < n; ++i) {
    tapes[i]->accumulate_parameter_grads();
    tapes[i].reset();
  }

  StepReport report;
  report.losses = aggregate(cfg.stage, losses, cfg.weights);
  for (const auto& [name, params] : groups) check_finite(params, name);
  double sq = 0.0;
  for (const auto& [name, params] : groups)
    for (const Parameter* p : params)
      for (double g : p->grad) sq += g * g;
  report.grad_norm = std::sqrt(sq);
  if (cfg.grad_clip > 0.0 && report.grad_norm > cfg.grad_clip) {
    const double c = cfg.grad_clip / report.grad_norm;
    for (auto& [name, params] : groups)
      for (Parameter* p : params)
        for (double& g : p->grad) g *= c;
  }

  report.lr = lr_schedule(step + 1, cfg.base_lr, cfg.warmup_steps);
  for (const auto& [name, params] : groups) {
    double lr = report.lr;
    if (cfg.stage == Stage::kFinetune && is_encoder_group(name)) lr *= policy.encoder_lr_scale;
    adam_update(params, name, lr, ++state.adam_steps[name], cfg.adam);
    report.group_lr[name] = lr;
  }
  ++state.step;
  return report;
}

LossReport evaluate_batch(Model& model, const std::vector<TrainSample>& batch, Stage stage, const KdAux& kd_aux,
                          const LossWeights& weights) {
  std::vector<SampleLoss> losses(batch.size());
  std::vector<std::exception_ptr> errors(batch.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < batch.size(); ++i) {
    try {
      Tape tape;
      const TrainSample& s = batch[i];
      Var loss = sample_loss(Binder::inference(tape), model, *s.utterance, s.utterance->features, s.teacher, stage,
                             kd_aux);
      losses[i] = {s.utterance->task, loss.value().item()};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
  return aggregate(stage, losses, weights);
}

namespace {

nlohmann::json loss_json(const LossReport& r) {
  nlohmann::json j = nlohmann::json::object();
  for (Task t : kAllTasks)
    if (r.has(t)) j[std::string(task_name(t))] = r[t].value;
  return j;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t step) {
  char name[32];
  std::snprintf(name, sizeof name, "ckpt-%08llu.bin", static_cast<unsigned long long>(step));
  return dir / name;
}

}  // namespace

StageResult run_stage(Model& model, TrainState& state, const std::vector<TrainingCorpus>& data,
                      const StageConfig& cfg, const FreezePolicy& policy, const std::filesystem::path& out_dir,
                      std::ostream* log) {
  cfg.validate();
  policy.validate();
  std::vector<const TrainingCorpus*> used;
  for (const TrainingCorpus& c : data) {
    if (cfg.stage == Stage::kFinetune && policy.freeze_sv && c.corpus.task == Task::kSv) continue;
    if (c.corpus.utterances.empty()) throw DataError("training corpus '" + c.corpus.name + "' is empty");
    const bool needs_teacher = cfg.stage == Stage::kPretrain || cfg.kd_aux[c.corpus.task];
    if (needs_teacher && c.teacher.size() != c.corpus.utterances.size()) {
      throw DataError("corpus '" + c.corpus.name + "' has no teacher targets for " + std::string(stage_name(cfg.stage)));
    }
    used.push_back(&c);
  }
  if (used.empty()) throw ConfigError(std::string(stage_name(cfg.stage)) + ": no corpora to train on");
  std::vector<std::vector<std::size_t>> frames;
  std::vector<std::size_t> repeats;
  for (const TrainingCorpus* c : used) {
    frames.emplace_back();
    for (const UtteranceRecord& u : c->corpus.utterances) frames.back().push_back(u.frames());
    repeats.push_back(c->repeat);
  }
  BatchSampler sampler(std::move(frames), std::move(repeats), cfg.frame_budget,
                       derive_key(state.seed, stage_name(cfg.stage)));
  if (state.sampler.cursors.empty()) {
    state.sampler = sampler.state();
  } else {
    sampler.restore(state.sampler);
  }
  Prefetcher prefetch(std::move(sampler), 4);

  StageResult result;
  std::filesystem::create_directories(out_dir);
  bool saved_last = false, first = true;
  while (state.epoch < cfg.epochs && (cfg.max_steps == 0 || state.step < cfg.max_steps)) {
    const MultiTaskBatch b = prefetch.next();
    std::vector<TrainSample> samples;
    samples.reserve(b.items.size());
    for (const BatchItem& it : b.items) {
      const TrainingCorpus& c = *used[it.corpus];
      samples.push_back({&c.corpus.utterances[it.index], c.teacher.empty() ? nullptr : &c.teacher[it.index]});
    }
    const StepReport r = train_step(model, state, samples, cfg, policy);
    state.sampler = b.state_after;
    state.epoch = b.state_after.epoch;
    if (first) result.first_losses = r.losses;
    result.last_losses = r.losses;
    first = false;
    if (log) {
      nlohmann::json line = {{"step", state.step},     {"stage", stage_name(cfg.stage)},
                             {"epoch", state.epoch},   {"lr", r.lr},
                             {"losses", loss_json(r.losses)}, {"total", r.losses.total},
                             {"grad_norm", r.grad_norm}, {"batch_frames", b.frames}};
      *log << line.dump() << '\n';
      log->flush();
    }
    saved_last = false;
    if (cfg.checkpoint_interval > 0 && state.step % cfg.checkpoint_interval == 0) {
      result.checkpoints.push_back(checkpoint_path(out_dir, state.step));
      save_checkpoint(result.checkpoints.back(), model, state);
      saved_last = true;
    }
  }
  if (!saved_last) {
    result.checkpoints.push_back(checkpoint_path(out_dir, state.step));
    save_checkpoint(result.checkpoints.back(), model, state);
  }
  return result;
}

}  // namespace mtkd
