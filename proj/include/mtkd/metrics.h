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

// Evaluation metrics: WER, macro mAP, EER, distillation L1, and the model
// drivers that produce them on a corpus.

#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mtkd/datapipe.h"
#include "mtkd/model.h"

namespace mtkd {

struct WerCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t ref_tokens = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  double rate() const;
  WerCounts& operator+=(const WerCounts& o);
  friend bool operator==(const WerCounts&, const WerCounts&) = default;
};

// Unit-cost Levenshtein alignment. Throws DataError for an empty reference.
WerCounts wer(const std::vector<std::size_t>& ref, const std::vector<std::size_t>& hyp);

struct MapResult {
  std::vector<std::optional<double>> per_class;  // empty for classes with no positive
  double mean = 0.0;                             // over classes with a positive
};

// scores and labels are [N x K]. Ranking is by descending score, ties by
// ascending sample index. Throws DataError when no class has a positive.
MapResult mean_average_precision(const Tensor& scores, const Tensor& labels);

struct ScoredTrial {
  double score;
  bool is_target;
};

struct EerResult {
  double rate;
  double threshold;  // accept when score >= threshold
};

// Sweeps thresholds at every distinct score and +inf; returns the first point
// where FAR <= FRR, linearly interpolated with the previous one. Throws
// DataError unless there is at least one target and one non-target trial.
EerResult eer(const std::vector<ScoredTrial>& trials);

struct TrialSpec {
  std::string a, b;
  bool is_target;
};

// Cosine score per pair. Throws DataError for an unknown id and NumericError
// for a zero-norm embedding.
std::vector<ScoredTrial> sv_trials_build(const std::unordered_map<std::string, Tensor>& embeddings,
                                         const std::vector<TrialSpec>& trials);

// Every unordered pair of distinct utterances; target when speakers match.
std::vector<TrialSpec> all_pairs_trials(const Corpus& corpus);

// Greedy transducer decoding: at each frame take the argmax; a token advances
// the label context, blank advances the frame. At most 2 T' tokens are emitted.
std::vector<std::size_t> greedy_transducer_decode(Model& model, const Tensor& features);

// Frame-weighted corpus mean of the per-utterance ASR distillation L1, with
// teacher targets already frame-paired (align_teacher_targets).
double kd_l1_eval(Model& model, const Corpus& corpus, const std::vector<Tensor>& teacher);

struct EvalReport {
  std::optional<WerCounts> wer;
  std::optional<MapResult> map;
  std::optional<EerResult> eer;
  std::optional<double> kd_l1;

  nlohmann::json to_json() const;
};

WerCounts evaluate_wer(Model& model, const Corpus& corpus);
MapResult evaluate_map(Model& model, const Corpus& corpus);
EerResult evaluate_eer(Model& model, const Corpus& corpus);

}  // namespace mtkd
