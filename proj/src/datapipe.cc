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

#include "mtkd/datapipe.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include <json.hpp>

#include "mtkd/error.h"
#include "mtkd/rng.h"

namespace mtkd {

using nlohmann::json;

namespace {

float to_f32(double v) { return static_cast<float>(v); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::span<const double> row(const Tensor& t, std::size_t r) {
  const std::size_t d = t.dim(1);
  return t.data().subspan(r * d, d);
}

std::string utterance_id(const std::string& corpus, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return corpus + "-" + buf;
}

}  // namespace

void Corpus::validate() const {
  for (const UtteranceRecord& u : utterances) {
    if (u.features.rank() != 2 || u.features.dim(1) != feature_dim) {
      throw DataError(name + "/" + u.id + ": features " + shape_str(u.features.shape()) +
                      " do not have " + std::to_string(feature_dim) + " columns");
    }
    if (u.task != task) throw DataError(name + "/" + u.id + ": task differs from its corpus");
    switch (task) {
      case Task::kAsr:
        if (!u.transcript) throw DataError(name + "/" + u.id + ": ASR record without transcript");
        for (std::size_t y : *u.transcript) {
          if (y == 0 || y > vocab) throw DataError(name + "/" + u.id + ": token outside 1..vocab");
        }
        break;
      case Task::kAt:
        if (!u.events || u.events->size() != num_classes) {
          throw DataError(name + "/" + u.id + ": AT record without a [" +
                          std::to_string(num_classes) + "] event label");
        }
        break;
      case Task::kSv:
        if (!u.speaker || *u.speaker >= num_speakers) {
          throw DataError(name + "/" + u.id + ": SV record without a valid speaker index");
        }
        break;
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic world

Tensor SynthWorld::token_prototype(std::size_t token) const {
  CounterRng rng(derive_key(derive_key(seed, "token"), token));
  Tensor p({feature_dim});
  for (double& v : p.vec()) v = token_scale * rng.normal();
  return p;
}

Tensor SynthWorld::speaker_signature(std::size_t speaker) const {
  CounterRng rng(derive_key(derive_key(seed, "speaker"), speaker));
  Tensor s({feature_dim});
  double ss = 0.0;
  for (double& v : s.vec()) {
    v = rng.normal();
    ss += v * v;
  }
  const double rms = std::sqrt(ss / static_cast<double>(feature_dim));
  for (double& v : s.vec()) v /= rms;
  return s;
}

Tensor SynthWorld::event_profile(std::size_t cls) const {
  CounterRng rng(derive_key(derive_key(seed, "event"), cls));
  const double spacing = static_cast<double>(feature_dim) / static_cast<double>(num_classes);
  const double center = (static_cast<double>(cls) + 0.5) * spacing + rng.uniform(-0.2, 0.2) * spacing;
  const double width = rng.uniform(0.15, 0.3) * spacing;
  Tensor p({feature_dim});
  for (std::size_t f = 0; f < feature_dim; ++f) {
    const double z = (static_cast<double>(f) - center) / width;
    p[f] = 2.0 * event_scale * std::exp(-0.5 * z * z);
  }
  return p;
}

void SynthCorpusConfig::validate() const {
  if (name.empty()) throw ConfigError("synthetic corpus needs a name");
  if ((task == Task::kAsr || task == Task::kSv) &&
      (min_tokens < 1 || max_tokens < min_tokens)) {
    throw ConfigError(name + ": token range must satisfy 1 <= min_tokens <= max_tokens");
  }
  if (task == Task::kAt && (min_frames < 1 || max_frames < min_frames)) {
    throw ConfigError(name + ": frame range must satisfy 1 <= min_frames <= max_frames");
  }
  if (num_speakers < 1) throw ConfigError(name + ": num_speakers must be >= 1");
}

Corpus synth_corpus(const SynthWorld& world, const SynthCorpusConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  corpus.name = cfg.name;
  corpus.task = cfg.task;
  corpus.feature_dim = world.feature_dim;
  corpus.vocab = world.vocab;
  corpus.num_classes = world.num_classes;
  corpus.num_speakers = cfg.num_speakers;
  const std::size_t f_dim = world.feature_dim;
  std::vector<Tensor> prototypes(world.vocab + 1);
  for (std::size_t v = 1; v <= world.vocab; ++v) prototypes[v] = world.token_prototype(v);
  std::vector<Tensor> events(world.num_classes);
  for (std::size_t k = 0; k < world.num_classes; ++k) events[k] = world.event_profile(k);

  const std::uint64_t corpus_key = derive_key(cfg.seed, cfg.name);
  for (std::size_t i = 0; i < cfg.n_utts; ++i) {
    CounterRng rng(derive_key(corpus_key, static_cast<std::uint64_t>(i)));
    UtteranceRecord u;
    u.id = utterance_id(cfg.name, i);
    u.task = cfg.task;
    Tensor x;
    if (cfg.task == Task::kAsr || cfg.task == Task::kSv) {
      const std::size_t speaker = rng.below(cfg.num_speakers);
      const std::size_t n_tokens = static_cast<std::size_t>(
          rng.range(static_cast<std::int64_t>(cfg.min_tokens), static_cast<std::int64_t>(cfg.max_tokens)));
      std::vector<std::size_t> tokens(n_tokens);
      for (std::size_t& y : tokens) y = 1 + rng.below(world.vocab);
      // Frame layout: silence, token, gap, token, ..., silence. 0 marks silence.
      std::vector<std::size_t> layout(static_cast<std::size_t>(rng.range(2, 4)), 0);
      for (std::size_t k = 0; k < n_tokens; ++k) {
        if (k > 0) layout.insert(layout.end(), static_cast<std::size_t>(rng.range(1, 3)), 0);
        layout.insert(layout.end(), static_cast<std::size_t>(rng.range(6, 10)), tokens[k]);
      }
      layout.insert(layout.end(), static_cast<std::size_t>(rng.range(2, 4)), 0);
      const Tensor sig = world.speaker_signature(cfg.speaker_base + speaker);
      x = Tensor({layout.size(), f_dim});
      for (std::size_t t = 0; t < layout.size(); ++t) {
        for (std::size_t f = 0; f < f_dim; ++f) {
          double v = cfg.speaker_scale * sig[f] + world.noise_std * rng.normal();
          if (layout[t] != 0) v += prototypes[layout[t]][f];
          x.at(t, f) = v;
        }
      }
      if (cfg.task == Task::kAsr) {
        u.transcript = tokens;
      } else {
        u.speaker = speaker;
      }
    } else {
      const std::size_t frames = static_cast<std::size_t>(
          rng.range(static_cast<std::int64_t>(cfg.min_frames), static_cast<std::int64_t>(cfg.max_frames)));
      Tensor label({world.num_classes});
      for (double& v : label.vec()) v = rng.uniform() < cfg.event_prob ? 1.0 : 0.0;
      if (std::all_of(label.vec().begin(), label.vec().end(), [](double v) { return v == 0.0; })) {
        label[rng.below(world.num_classes)] = 1.0;
      }
      x = Tensor({frames, f_dim});
      for (double& v : x.vec()) v = world.noise_std * rng.normal();
      for (std::size_t k = 0; k < world.num_classes; ++k) {
        if (label[k] == 0.0) continue;
        const std::size_t len = static_cast<std::size_t>(
            rng.range(static_cast<std::int64_t>((frames + 1) / 2), static_cast<std::int64_t>(frames)));
        const std::size_t start = static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(frames - len)));
        for (std::size_t t = start; t < start + len; ++t) {
          for (std::size_t f = 0; f < f_dim; ++f) x.at(t, f) += events[k][f];
        }
      }
      u.events = label;
    }
    for (double& v : x.vec()) v = to_f32(v);
    u.features = std::move(x);
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Teachers

SynthTeacher::SynthTeacher(Task task, const SynthWorld& world, std::size_t out_dim, std::uint64_t seed)
    : task_(task), out_dim_(out_dim), feature_dim_(world.feature_dim) {
  if (out_dim == 0) throw ConfigError("teacher output dimension must be positive");
  const std::size_t f_dim = world.feature_dim;
  CounterRng rng(derive_key(derive_key(seed, "teacher"), static_cast<std::uint64_t>(task)));
  switch (task) {
    case Task::kAsr: {
      // Matched filters over the token prototypes (row 0 = silence) give a
      // posterior over tokens for each frame pair; a random embedding of the
      // posterior plus a small random view of the raw input forms the output.
      set_token_filters(world);
      const std::size_t v1 = world.vocab + 1;
      values_ = Tensor({v1, out_dim});
      for (double& v : values_.vec()) v = rng.normal();
      proj_ = Tensor({f_dim, out_dim});
      for (double& v : proj_.vec()) v = 0.1 * rng.normal() / std::sqrt(static_cast<double>(f_dim));
      break;
    }
    case Task::kAt: {
      if (out_dim != world.num_classes) {
        throw ConfigError("AT teacher output dimension must equal the number of classes");
      }
      keys_ = Tensor({out_dim, f_dim});
      key_bias_ = Tensor({out_dim});
      for (std::size_t k = 0; k < out_dim; ++k) {
        const Tensor e = world.event_profile(k);
        const double norm = std::sqrt(dot(e.data(), e.data()));
        for (std::size_t f = 0; f < f_dim; ++f) keys_.at(k, f) = e[f] / norm;
        key_bias_[k] = norm;
      }
      break;
    }
    case Task::kSv: {
      set_token_filters(world);
      proj_ = Tensor({f_dim, out_dim});
      for (double& v : proj_.vec()) v = rng.normal() / std::sqrt(static_cast<double>(f_dim));
      break;
    }
  }
}

void SynthTeacher::set_token_filters(const SynthWorld& world) {
  const std::size_t v1 = world.vocab + 1, f_dim = world.feature_dim;
  keys_ = Tensor({v1, f_dim});
  key_bias_ = Tensor({v1});
  for (std::size_t v = 1; v < v1; ++v) {
    const Tensor p = world.token_prototype(v);
    for (std::size_t f = 0; f < f_dim; ++f) keys_.at(v, f) = p[f];
    key_bias_[v] = -dot(p.data(), p.data());
  }
  noise_var_ = world.noise_std * world.noise_std;
}

void SynthTeacher::token_posterior(std::span<const double> x, double var, std::vector<double>& post) const {
  // log N(x; p_v, var) up to a shared constant.
  const std::size_t v1 = keys_.dim(0);
  post.resize(v1);
  double mx = -INFINITY;
  for (std::size_t v = 0; v < v1; ++v) {
    post[v] = (2.0 * dot(x, row(keys_, v)) + key_bias_[v]) / (2.0 * var);
    mx = std::max(mx, post[v]);
  }
  double z = 0.0;
  for (double& p : post) z += (p = std::exp(p - mx));
  for (double& p : post) p /= z;
}

Tensor SynthTeacher::operator()(const Tensor& features) const {
  if (features.rank() != 2 || features.dim(1) != feature_dim_) {
    throw ShapeError("teacher: expected [T x " + std::to_string(feature_dim_) + "] features, got " +
                     shape_str(features.shape()));
  }
  if (features.dim(0) == 0) throw ShapeError("teacher: empty utterance");
  switch (task_) {
    case Task::kAsr: return asr(features);
    case Task::kAt: return at(features);
    case Task::kSv: return sv(features);
  }
  return {};
}

Tensor SynthTeacher::asr(const Tensor& x) const {
  const std::size_t pairs = x.dim(0) / 2, f_dim = feature_dim_, v1 = keys_.dim(0);
  Tensor out({pairs, out_dim_});
  std::vector<double> avg(f_dim), post;
  for (std::size_t j = 0; j < pairs; ++j) {
    for (std::size_t f = 0; f < f_dim; ++f) avg[f] = 0.5 * (x.at(2 * j, f) + x.at(2 * j + 1, f));
    token_posterior(avg, 0.5 * noise_var_, post);
    for (std::size_t d = 0; d < out_dim_; ++d) {
      double h = 0.0;
      for (std::size_t v = 0; v < v1; ++v) h += post[v] * values_.at(v, d);
      for (std::size_t f = 0; f < f_dim; ++f) h += avg[f] * proj_.at(f, d);
      out.at(j, d) = std::tanh(h);
    }
  }
  return out;
}

Tensor SynthTeacher::at(const Tensor& x) const {
  const std::size_t frames = x.dim(0);
  Tensor logits({out_dim_});
  for (std::size_t k = 0; k < out_dim_; ++k) {
    double m = 0.0;
    for (std::size_t t = 0; t < frames; ++t) m += dot(row(x, t), row(keys_, k));
    m /= static_cast<double>(frames) * key_bias_[k];  // fraction of frames carrying the event
    logits[k] = 16.0 * (m - 0.25);
  }
  return logits;
}

// Pools what the token filters cannot explain, which is mostly the speaker.
Tensor SynthTeacher::sv(const Tensor& x) const {
  const std::size_t frames = x.dim(0), f_dim = feature_dim_, v1 = keys_.dim(0);
  std::vector<double> mean(f_dim, 0.0), post;
  for (std::size_t t = 0; t < frames; ++t) {
    token_posterior(row(x, t), noise_var_, post);
    for (std::size_t f = 0; f < f_dim; ++f) {
      double content = 0.0;
      for (std::size_t v = 1; v < v1; ++v) content += post[v] * keys_.at(v, f);
      mean[f] += x.at(t, f) - content;
    }
  }
  for (double& m : mean) m /= static_cast<double>(frames);
  Tensor v({out_dim_});
  for (std::size_t j = 0; j < out_dim_; ++j) {
    double s = 0.0;
    for (std::size_t f = 0; f < f_dim; ++f) s += mean[f] * proj_.at(f, j);
    v[j] = s;
  }
  const double norm = std::sqrt(dot(v.data(), v.data()));
  if (norm == 0.0) throw NumericError("SV teacher: zero embedding");
  for (double& e : v.vec()) e /= norm;
  return v;
}

SynthTeacher synth_teacher(Task task, const SynthWorld& world, std::size_t out_dim, std::uint64_t seed) {
  return SynthTeacher(task, world, out_dim, seed);
}

RecordTag teacher_tag(Task task) {
  switch (task) {
    case Task::kAsr: return RecordTag::kAsrTeacher;
    case Task::kAt: return RecordTag::kAtTeacher;
    case Task::kSv: return RecordTag::kSvTeacher;
  }
  return RecordTag::kFeatures;
}

Shard extract_labels(const Corpus& corpus, const SynthTeacher& teacher) {
  if (teacher.task() != corpus.task) {
    throw DataError("teacher for " + std::string(task_name(teacher.task())) + " cannot label " +
                    std::string(task_name(corpus.task)) + " corpus '" + corpus.name + "'");
  }
  Shard shard;
  shard.tag = teacher_tag(corpus.task);
  shard.dims = {static_cast<std::uint32_t>(teacher.out_dim())};
  for (const UtteranceRecord& u : corpus.utterances) {
    shard.records.push_back(make_record(u.id, teacher(u.features)));
  }
  return shard;
}

Tensor concat_teacher_frames(const Tensor& te) {
  if (te.rank() != 2) throw ShapeError("concat_teacher_frames: expected [T x D], got " + shape_str(te.shape()));
  const std::size_t frames = te.dim(0), d = te.dim(1);
  if (frames < 2) {
    throw ShapeError("concat_teacher_frames: need at least 2 teacher frames, got " + std::to_string(frames));
  }
  const std::size_t pairs = frames / 2;
  Tensor out({pairs, 2 * d});
  for (std::size_t k = 0; k < pairs; ++k) {
    for (std::size_t i = 0; i < d; ++i) {
      out.at(k, i) = te.at(2 * k, i);
      out.at(k, d + i) = te.at(2 * k + 1, i);
    }
  }
  return out;
}

std::vector<Tensor> align_teacher_targets(const Corpus& corpus, const Shard& shard) {
  if (shard.tag != teacher_tag(corpus.task)) {
    throw DataError("shard holds " + std::string(tag_name(shard.tag)) + " records but corpus '" +
                    corpus.name + "' is " + std::string(task_name(corpus.task)));
  }
  std::unordered_map<std::string_view, const ShardRecord*> by_id;
  for (const ShardRecord& r : shard.records) by_id.emplace(r.id, &r);
  std::vector<Tensor> out;
  out.reserve(corpus.utterances.size());
  for (const UtteranceRecord& u : corpus.utterances) {
    auto it = by_id.find(u.id);
    if (it == by_id.end()) throw DataError("no teacher record for utterance '" + u.id + "'");
    Tensor t = record_tensor(*it->second);
    out.push_back(corpus.task == Task::kAsr ? concat_teacher_frames(t) : std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus files

namespace {

std::filesystem::path features_path(const std::filesystem::path& manifest) {
  std::string stem = manifest.filename().string();
  if (stem.size() > 5 && stem.ends_with(".json")) stem.resize(stem.size() - 5);
  return manifest.parent_path() / (stem + ".features.bin");
}

template <typename T>
T field(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw FormatError(where + "." + key + ": missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError(where + "." + key + ": wrong type");
  }
}

}  // namespace

void write_corpus(const std::filesystem::path& manifest, const Corpus& corpus) {
  corpus.validate();
  Shard features;
  features.tag = RecordTag::kFeatures;
  features.dims = {static_cast<std::uint32_t>(corpus.feature_dim)};
  json utts = json::array();
  for (const UtteranceRecord& u : corpus.utterances) {
    features.records.push_back(make_record(u.id, u.features));
    json j = {{"id", u.id}, {"frames", u.frames()}};
    if (u.transcript) j["transcript"] = *u.transcript;
    if (u.events) {
      std::vector<int> ev;
      for (double v : u.events->vec()) ev.push_back(v != 0.0);
      j["events"] = ev;
    }
    if (u.speaker) j["speaker"] = *u.speaker;
    utts.push_back(std::move(j));
  }
  const std::filesystem::path feat = features_path(manifest);
  json doc = {{"format", "mtkd-corpus"},
              {"version", 1},
              {"name", corpus.name},
              {"task", task_name(corpus.task)},
              {"feature_dim", corpus.feature_dim},
              {"vocab", corpus.vocab},
              {"num_classes", corpus.num_classes},
              {"num_speakers", corpus.num_speakers},
              {"features", feat.filename().string()},
              {"utterances", std::move(utts)}};
  write_shard(feat, features);
  write_file(manifest, doc.dump(1) + "\n");
}

Corpus read_corpus(const std::filesystem::path& manifest) {
  json doc;
  try {
    doc = json::parse(read_file(manifest));
  } catch (const json::parse_error& e) {
    throw FormatError(manifest.string() + ": invalid JSON (" + e.what() + ")");
  }
  const std::string where = manifest.string();
  if (field<std::string>(doc, "format", where) != "mtkd-corpus") {
    throw FormatError(where + ".format: not an mtkd corpus manifest");
  }
  Corpus c;
  c.name = field<std::string>(doc, "name", where);
  try {
    c.task = parse_task(field<std::string>(doc, "task", where));
  } catch (const ConfigError& e) {
    throw FormatError(where + ".task: " + e.what());
  }
  c.feature_dim = field<std::size_t>(doc, "feature_dim", where);
  c.vocab = field<std::size_t>(doc, "vocab", where);
  c.num_classes = field<std::size_t>(doc, "num_classes", where);
  c.num_speakers = field<std::size_t>(doc, "num_speakers", where);
  const Shard features = read_shard(manifest.parent_path() / field<std::string>(doc, "features", where));
  if (features.tag != RecordTag::kFeatures) throw FormatError(where + ".features: not a feature file");
  std::unordered_map<std::string_view, const ShardRecord*> by_id;
  for (const ShardRecord& r : features.records) by_id.emplace(r.id, &r);
  const json& utts = doc.at("utterances");
  if (!utts.is_array()) throw FormatError(where + ".utterances: expected an array");
  for (std::size_t i = 0; i < utts.size(); ++i) {
    const std::string uw = where + ".utterances[" + std::to_string(i) + "]";
    const json& j = utts[i];
    UtteranceRecord u;
    u.id = field<std::string>(j, "id", uw);
    u.task = c.task;
    auto it = by_id.find(u.id);
    if (it == by_id.end()) throw DataError(uw + ": no features for '" + u.id + "'");
    u.features = record_tensor(*it->second);
    if (u.frames() != field<std::size_t>(j, "frames", uw)) {
      throw DataError(uw + ".frames: disagrees with the feature file");
    }
    if (j.contains("transcript")) u.transcript = field<std::vector<std::size_t>>(j, "transcript", uw);
    if (j.contains("events")) {
      const auto ev = field<std::vector<int>>(j, "events", uw);
      Tensor t({ev.size()});
      for (std::size_t k = 0; k < ev.size(); ++k) t[k] = ev[k] != 0;
      u.events = std::move(t);
    }
    if (j.contains("speaker")) u.speaker = field<std::size_t>(j, "speaker", uw);
    c.utterances.push_back(std::move(u));
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Augmentation

Tensor spec_augment(const Tensor& features, const SpecAugmentPolicy& p, std::uint64_t seed) {
  if (features.rank() != 2) throw ShapeError("spec_augment: expected [T x F] features");
  const std::size_t frames = features.dim(0), bins = features.dim(1);
  if (p.min_time_width > p.max_time_width || p.min_freq_width > p.max_freq_width) {
    throw ContractError("spec_augment: minimum mask width exceeds the maximum");
  }
  if ((p.n_time_masks > 0 && p.max_time_width > frames) || (p.n_freq_masks > 0 && p.max_freq_width > bins)) {
    throw ContractError("spec_augment: mask width exceeds the feature dimensions");
  }
  Tensor out = features;
  if (!p.enabled() || features.size() == 0) return out;
  double mean = 0.0;
  for (double v : features.vec()) mean += v;
  mean /= static_cast<double>(features.size());
  CounterRng rng(derive_key(seed, "spec_augment"));
  auto width = [&rng](std::size_t lo, std::size_t hi) {
    return static_cast<std::size_t>(rng.range(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
  };
  for (std::size_t m = 0; m < p.n_time_masks; ++m) {
    const std::size_t w = width(p.min_time_width, p.max_time_width);
    const std::size_t start = rng.below(frames - w + 1);
    for (std::size_t t = start; t < start + w; ++t)
      for (std::size_t f = 0; f < bins; ++f) out.at(t, f) = mean;
  }
  for (std::size_t m = 0; m < p.n_freq_masks; ++m) {
    const std::size_t w = width(p.min_freq_width, p.max_freq_width);
    const std::size_t start = rng.below(bins - w + 1);
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t f = start; f < start + w; ++f) out.at(t, f) = mean;
  }
  return out;
}

Tensor noise_mix(const Tensor& features, const std::vector<Tensor>& bank, double snr_db, std::uint64_t seed,
                 MixInfo* info) {
  if (std::isnan(snr_db) || snr_db == -INFINITY) throw ContractError("noise_mix: SNR must be finite or +inf");
  if (info) *info = {};
  if (snr_db == INFINITY) return features;
  if (bank.empty()) throw DataError("noise_mix: empty noise bank");
  const std::size_t frames = features.dim(0), bins = features.dim(1);
  CounterRng rng(derive_key(seed, "noise_mix"));
  const std::size_t seg = rng.below(bank.size());
  const Tensor& n = bank[seg];
  if (n.rank() != 2 || n.dim(1) != bins || n.dim(0) == 0) {
    throw ShapeError("noise_mix: noise segment " + shape_str(n.shape()) + " does not match features " +
                     shape_str(features.shape()));
  }
  const std::size_t offset = rng.below(n.dim(0));
  Tensor noise({frames, bins});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t f = 0; f < bins; ++f) noise.at(t, f) = n.at((offset + t) % n.dim(0), f);
  const double ex = dot(features.data(), features.data());
  const double en = dot(noise.data(), noise.data());
  const double gain = en > 0.0 ? std::sqrt(ex / (en * std::pow(10.0, snr_db / 10.0))) : 0.0;
  Tensor out = features;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += gain * noise[i];
  if (info) *info = {seg, offset, gain};
  return out;
}

std::vector<Tensor> synth_noise_bank(const SynthWorld& world, std::size_t count, std::size_t frames) {
  std::vector<Tensor> bank;
  for (std::size_t s = 0; s < count; ++s) {
    CounterRng rng(derive_key(derive_key(world.seed, "noise"), s));
    std::vector<double> colour(world.feature_dim);
    for (double& c : colour) c = rng.uniform(0.3, 1.5);
    Tensor seg({frames, world.feature_dim});
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t f = 0; f < world.feature_dim; ++f) seg.at(t, f) = colour[f] * rng.normal();
    bank.push_back(std::move(seg));
  }
  return bank;
}

// ---------------------------------------------------------------------------
// Sampler

void CorpusSpec::validate() const {
  if (size < 1) throw ConfigError("corpus '" + name + "': size must be >= 1");
  if (repeat < 1) throw ConfigError("corpus '" + name + "': repeat must be >= 1");
}

BatchSampler::BatchSampler(std::vector<std::vector<std::size_t>> frames, std::vector<std::size_t> repeats,
                           std::size_t frame_budget, std::uint64_t seed)
    : frames_(std::move(frames)), repeats_(std::move(repeats)), budget_(frame_budget), seed_(seed) {
  if (frames_.empty()) throw ContractError("sampler: no corpora");
  if (frames_.size() != repeats_.size()) throw ContractError("sampler: one repeat factor per corpus");
  std::size_t longest = 0;
  for (std::size_t c = 0; c < frames_.size(); ++c) {
    if (frames_[c].empty()) throw ContractError("sampler: corpus " + std::to_string(c) + " is empty");
    if (repeats_[c] < 1) throw ContractError("sampler: repeat factors must be >= 1");
    for (std::size_t f : frames_[c]) longest = std::max(longest, f);
  }
  if (budget_ < longest) {
    throw ConfigError("batch frame budget " + std::to_string(budget_) + " is smaller than the longest utterance (" +
                      std::to_string(longest) + " frames)");
  }
  state_.cursors.assign(frames_.size(), 0);
  start_epoch();
}

void BatchSampler::start_epoch() {
  order_.assign(frames_.size(), {});
  const std::uint64_t epoch_key = derive_key(derive_key(seed_, "epoch"), state_.epoch);
  for (std::size_t c = 0; c < frames_.size(); ++c) {
    std::vector<std::size_t>& seq = order_[c];
    for (std::size_t r = 0; r < repeats_[c]; ++r)
      for (std::size_t i = 0; i < frames_[c].size(); ++i) seq.push_back(i);
    CounterRng rng(derive_key(epoch_key, static_cast<std::uint64_t>(c)));
    rng.shuffle(seq);
  }
}

void BatchSampler::restore(const SamplerState& state) {
  if (state.cursors.size() != frames_.size()) throw DataError("sampler state has the wrong corpus count");
  for (std::size_t c = 0; c < frames_.size(); ++c) {
    if (state.cursors[c] >= expanded_size(c)) throw DataError("sampler state cursor out of range");
  }
  state_ = state;
  start_epoch();
}

std::size_t BatchSampler::utterance_at(std::size_t corpus, std::size_t position) const {
  return order_[corpus][position];
}

MultiTaskBatch BatchSampler::next() {
  MultiTaskBatch batch;
  batch.per_corpus.assign(frames_.size(), 0);
  batch.epoch = state_.epoch;
  CounterRng rng(derive_key(seed_, "draw"), state_.rng_counter);
  while (true) {
    std::uint64_t remaining = 0;
    for (std::size_t c = 0; c < frames_.size(); ++c) remaining += expanded_size(c) - state_.cursors[c];
    std::uint64_t pick = rng.below(remaining);
    std::size_t c = 0;
    while (pick >= expanded_size(c) - state_.cursors[c]) {
      pick -= expanded_size(c) - state_.cursors[c];
      ++c;
    }
    const std::size_t index = utterance_at(c, state_.cursors[c]);
    const std::size_t f = frames_[c][index];
    if (!batch.items.empty() && batch.frames + f > budget_) break;
    batch.items.push_back({c, index});
    batch.frames += f;
    ++batch.per_corpus[c];
    if (++state_.cursors[c] == expanded_size(c)) {
      batch.epoch_end = true;
      break;
    }
  }
  state_.rng_counter = rng.counter();
  if (batch.epoch_end) {
    ++state_.epoch;
    state_.cursors.assign(frames_.size(), 0);
    start_epoch();
  }
  batch.state_after = state_;
  return batch;
}

Prefetcher::Prefetcher(BatchSampler sampler, std::size_t capacity)
    : sampler_(std::move(sampler)), capacity_(std::max<std::size_t>(capacity, 1)) {
  worker_ = std::thread([this] { run(); });
}

Prefetcher::~Prefetcher() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

void Prefetcher::run() {
  while (true) {
    {
      std::unique_lock<std::mutex> lock(mu_);
      cv_.wait(lock, [this] { return stop_ || queue_.size() < capacity_; });
      if (stop_) return;
    }
    try {
      MultiTaskBatch b = sampler_.next();
      std::lock_guard<std::mutex> lock(mu_);
      queue_.push_back(std::move(b));
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu_);
      error_ = std::current_exception();
      stop_ = true;
    }
    cv_.notify_all();
  }
}

MultiTaskBatch Prefetcher::next() {
  std::unique_lock<std::mutex> lock(mu_);
  cv_.wait(lock, [this] { return !queue_.empty() || error_; });
  if (queue_.empty()) std::rethrow_exception(error_);
  MultiTaskBatch b = std::move(queue_.front());
  queue_.pop_front();
  cv_.notify_all();
  return b;
}

}  // namespace mtkd
