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

// Corpora, frozen synthetic teachers, teacher-label shards, frame pairing,
// augmentation and the multi-corpus batch sampler.

#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "mtkd/losses.h"
#include "mtkd/records.h"
#include "mtkd/tensor.h"

namespace mtkd {

struct UtteranceRecord {
  std::string id;
  Task task = Task::kAsr;
  Tensor features;  // [T x F], values representable in 32 bits
  std::optional<std::vector<std::size_t>> transcript;  // tokens in 1..V
  std::optional<Tensor> events;                        // multi-hot [K]
  std::optional<std::size_t> speaker;                  // index within the corpus

  std::size_t frames() const { return features.dim(0); }
};

struct Corpus {
  std::string name;
  Task task = Task::kAsr;
  std::size_t feature_dim = 80;
  std::size_t vocab = 0;         // ASR
  std::size_t num_classes = 0;   // AT
  std::size_t num_speakers = 0;  // speakers with a label in this corpus
  std::vector<UtteranceRecord> utterances;

  // Throws DataError when a record lacks its task's label or has a bad shape.
  void validate() const;
};

// Shared generative structure behind every synthetic corpus of one experiment:
// token prototypes, speaker signatures and audio-event spectral profiles.
struct SynthWorld {
  std::uint64_t seed = 1;
  std::size_t feature_dim = 80;
  std::size_t vocab = 32;
  std::size_t num_classes = 8;
  double noise_std = 1.0;
  double token_scale = 1.0;
  double event_scale = 1.0;

  Tensor token_prototype(std::size_t token) const;    // [F], token in 1..V
  Tensor speaker_signature(std::size_t speaker) const;  // [F], unit RMS
  Tensor event_profile(std::size_t cls) const;          // [F], Gaussian bump
};

struct SynthCorpusConfig {
  std::string name;
  Task task = Task::kAsr;
  std::size_t n_utts = 0;
  std::uint64_t seed = 1;
  // Speaker identities are world ids speaker_base .. speaker_base + num_speakers - 1;
  // records store the index relative to speaker_base.
  std::size_t speaker_base = 0;
  std::size_t num_speakers = 8;
  double speaker_scale = 0.5;
  // ASR and SV: token count range; each token spans 6..10 frames.
  std::size_t min_tokens = 2, max_tokens = 5;
  // AT: utterance length range in frames.
  std::size_t min_frames = 24, max_frames = 48;
  double event_prob = 0.3;

  void validate() const;
};

// Deterministic per (world, config, utterance index); features are rounded
// to 32-bit floats so the in-memory corpus equals its on-disk form.
Corpus synth_corpus(const SynthWorld& world, const SynthCorpusConfig& cfg);

// Frozen stand-in teacher. ASR: [T x F] -> [floor(T/2) x D_t], one output per
// pair of input frames. AT: -> [K] logits. SV: -> unit-norm [J].
class SynthTeacher {
 public:
  SynthTeacher(Task task, const SynthWorld& world, std::size_t out_dim, std::uint64_t seed);

  Task task() const { return task_; }
  std::size_t out_dim() const { return out_dim_; }
  Tensor operator()(const Tensor& features) const;

 private:
  void set_token_filters(const SynthWorld& world);
  // Posterior over {silence, tokens} for one observation with noise variance `var`.
  void token_posterior(std::span<const double> x, double var, std::vector<double>& post) const;
  Tensor asr(const Tensor& x) const;
  Tensor at(const Tensor& x) const;
  Tensor sv(const Tensor& x) const;

  Task task_;
  std::size_t out_dim_;
  std::size_t feature_dim_;
  double noise_var_ = 1.0;
  Tensor keys_;       // ASR, SV: [(V+1) x F] token prototypes (row 0 silence); AT: [K x F]
  Tensor key_bias_;   // ASR: -|p_v|^2; AT: profile norms
  Tensor values_;     // ASR: [(V+1) x D_t]
  Tensor proj_;       // ASR: [F x D_t] residual path; SV: [F x J]
};

SynthTeacher synth_teacher(Task task, const SynthWorld& world, std::size_t out_dim, std::uint64_t seed);

RecordTag teacher_tag(Task task);

// One record per utterance, keyed by id.
Shard extract_labels(const Corpus& corpus, const SynthTeacher& teacher);

// [T_t x D_t] -> [floor(T_t/2) x 2 D_t]; row k = [te[2k]; te[2k+1]].
Tensor concat_teacher_frames(const Tensor& te);

// Teacher targets aligned with corpus.utterances; ASR targets are frame-paired.
// Throws DataError when a record is missing or the shard's task differs.
std::vector<Tensor> align_teacher_targets(const Corpus& corpus, const Shard& shard);

// Manifest JSON plus a companion feature file "<stem>.features.bin".
void write_corpus(const std::filesystem::path& manifest, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& manifest);

// ---------------------------------------------------------------------------
// Augmentation

struct SpecAugmentPolicy {
  std::size_t n_time_masks = 0;
  std::size_t min_time_width = 0, max_time_width = 0;
  std::size_t n_freq_masks = 0;
  std::size_t min_freq_width = 0, max_freq_width = 0;

  bool enabled() const { return n_time_masks > 0 || n_freq_masks > 0; }
};

// Masked cells take the utterance's scalar feature mean.
Tensor spec_augment(const Tensor& features, const SpecAugmentPolicy& policy, std::uint64_t seed);

struct MixInfo {
  std::size_t segment = 0;
  std::size_t offset = 0;
  double gain = 0.0;
};

// x + g * n for a random noise excerpt n (tiled when shorter than x), with g
// chosen so that 10 log10(|x|^2 / |g n|^2) = snr_db. snr_db = +inf returns x.
Tensor noise_mix(const Tensor& features, const std::vector<Tensor>& bank, double snr_db,
                 std::uint64_t seed, MixInfo* info = nullptr);

// Coloured Gaussian noise segments [frames x F].
std::vector<Tensor> synth_noise_bank(const SynthWorld& world, std::size_t count, std::size_t frames);

// ---------------------------------------------------------------------------
// Sampling

struct CorpusSpec {
  std::string name;
  Task task = Task::kAsr;
  std::string path;
  std::size_t size = 0;
  std::size_t repeat = 1;

  void validate() const;
};

struct SamplerState {
  std::uint64_t epoch = 0;
  std::vector<std::uint64_t> cursors;  // consumed positions per corpus this epoch
  std::uint64_t rng_counter = 0;

  friend bool operator==(const SamplerState&, const SamplerState&) = default;
};

struct BatchItem {
  std::size_t corpus;
  std::size_t index;  // utterance index within the corpus

  friend bool operator==(const BatchItem&, const BatchItem&) = default;
};

struct MultiTaskBatch {
  std::vector<BatchItem> items;
  std::vector<std::size_t> per_corpus;  // item counts
  std::size_t frames = 0;
  bool epoch_end = false;  // a corpus ran out while filling this batch
  std::uint64_t epoch = 0;
  SamplerState state_after;
};

// Size-proportional multi-corpus sampler. Each epoch, every corpus contributes
// a shuffled sequence of its utterances repeated `repeat` times; the source of
// each draw is chosen with probability proportional to the items it has left.
// The epoch ends as soon as any sequence is exhausted.
class BatchSampler {
 public:
  // frames[c][i] is the length of utterance i of corpus c.
  BatchSampler(std::vector<std::vector<std::size_t>> frames, std::vector<std::size_t> repeats,
               std::size_t frame_budget, std::uint64_t seed);

  MultiTaskBatch next();

  const SamplerState& state() const { return state_; }
  void restore(const SamplerState& state);
  std::size_t expanded_size(std::size_t corpus) const { return frames_[corpus].size() * repeats_[corpus]; }

 private:
  void start_epoch();
  std::size_t utterance_at(std::size_t corpus, std::size_t position) const;

  std::vector<std::vector<std::size_t>> frames_;
  std::vector<std::size_t> repeats_;
  std::size_t budget_;
  std::uint64_t seed_;
  SamplerState state_;
  std::vector<std::vector<std::size_t>> order_;  // this epoch's expanded sequences
};

// Runs a sampler on a worker thread, keeping up to `capacity` batches ready.
class Prefetcher {
 public:
  Prefetcher(BatchSampler sampler, std::size_t capacity);
  ~Prefetcher();
  Prefetcher(const Prefetcher&) = delete;
  Prefetcher& operator=(const Prefetcher&) = delete;

  MultiTaskBatch next();

 private:
  void run();

  BatchSampler sampler_;
  std::size_t capacity_;
  std::deque<MultiTaskBatch> queue_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stop_ = false;
  std::exception_ptr error_;
  std::thread worker_;
};

}  // namespace mtkd
