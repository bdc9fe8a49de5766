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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtkd/error.h"
#include "mtkd/losses.h"
#include "mtkd/metrics.h"
#include "mtkd/rng.h"
#include "mtkd/trainer.h"
#include "support/gradcheck.h"
#include "support/oracles.h"

namespace mtkd {
namespace {

using testing::random_tensor;

std::vector<std::size_t> random_tokens(CounterRng& rng, std::size_t max_len, std::size_t alphabet) {
  std::vector<std::size_t> s(rng.below(max_len + 1));
  for (auto& t : s) t = rng.below(alphabet);
  return s;
}

// ---- WER ----

TEST(Wer, Examples) {
  EXPECT_EQ(wer({1, 2, 3}, {1, 2, 3}).rate(), 0.0);
  const WerCounts c = wer({1, 2, 3}, {1, 9, 3});
  EXPECT_EQ(c.substitutions, 1u);
  EXPECT_EQ(c.errors(), 1u);
  EXPECT_DOUBLE_EQ(c.rate(), 1.0 / 3.0);
  const WerCounts d = wer({1, 2, 3}, {});
  EXPECT_EQ(d.deletions, 3u);
  const WerCounts i = wer({4}, {4, 4, 4});
  EXPECT_EQ(i.insertions, 2u);
  EXPECT_DOUBLE_EQ(i.rate(), 2.0);
}

TEST(Wer, EmptyReferenceRejected) { EXPECT_THROW(wer({}, {1}), DataError); }

TEST(Wer, MatchesExhaustiveEditSearch) {
  CounterRng rng(derive_key(3, "wer"));
  for (int c = 0; c < 200; ++c) {
    std::vector<std::size_t> ref;
    while (ref.empty()) ref = random_tokens(rng, 6, 3);
    const auto hyp = random_tokens(rng, 6, 3);
    const WerCounts w = wer(ref, hyp);
    EXPECT_EQ(w.errors(), testing::edit_distance_bruteforce(ref, hyp)) << "case " << c;
    EXPECT_EQ(w.ref_tokens, ref.size());
    // Counts must describe a valid script: |hyp| = |ref| - D + I.
    EXPECT_EQ(hyp.size() + w.deletions, ref.size() + w.insertions);
  }
}

TEST(Wer, InvariantUnderAlphabetBijection) {
  CounterRng rng(derive_key(4, "wer-perm"));
  for (int c = 0; c < 100; ++c) {
    std::vector<std::size_t> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<std::size_t> ref;
    while (ref.empty()) ref = random_tokens(rng, 8, 10);
    const auto hyp = random_tokens(rng, 8, 10);
    auto relabel = [&](std::vector<std::size_t> s) {
      for (auto& t : s) t = perm[t];
      return s;
    };
    EXPECT_EQ(wer(ref, hyp), wer(relabel(ref), relabel(hyp)));
  }
}

// ---- mAP ----

Tensor column(std::initializer_list<double> v) {
  Tensor t({v.size(), 1});
  std::copy(v.begin(), v.end(), t.vec().begin());
  return t;
}

TEST(Map, Examples) {
  EXPECT_DOUBLE_EQ(mean_average_precision(column({0.9, 0.8, 0.1}), column({1, 1, 0})).mean, 1.0);
  EXPECT_DOUBLE_EQ(mean_average_precision(column({0.9, 0.1}), column({0, 1})).mean, 0.5);
  // Tie: the lower sample index ranks first.
  EXPECT_DOUBLE_EQ(mean_average_precision(column({0.5, 0.5}), column({0, 1})).mean, 0.5);
  EXPECT_DOUBLE_EQ(mean_average_precision(column({0.5, 0.5}), column({1, 0})).mean, 1.0);
}

TEST(Map, ClassesWithoutPositivesAreExcluded) {
  Tensor scores({3, 2}), labels({3, 2});
  scores.at(0, 0) = 0.9;
  scores.at(1, 0) = 0.2;
  scores.at(2, 0) = 0.5;
  labels.at(1, 0) = 1;
  const MapResult r = mean_average_precision(scores, labels);
  ASSERT_EQ(r.per_class.size(), 2u);
  EXPECT_FALSE(r.per_class[1].has_value());
  EXPECT_DOUBLE_EQ(*r.per_class[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.mean, 1.0 / 3.0);
}

TEST(Map, NoPositivesRejected) {
  EXPECT_THROW(mean_average_precision(column({0.1, 0.2}), column({0, 0})), DataError);
}

TEST(Map, MatchesRankWalkOracle) {
  CounterRng rng(derive_key(5, "map"));
  for (int c = 0; c < 100; ++c) {
    Tensor scores({20, 4}), labels({20, 4});
    for (double& s : scores.vec()) s = std::round(rng.uniform() * 8.0) / 8.0;  // coarse grid forces ties
    for (double& l : labels.vec()) l = rng.uniform() < 0.3 ? 1.0 : 0.0;
    labels.at(rng.below(20), 0) = 1.0;
    const MapResult r = mean_average_precision(scores, labels);
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      std::vector<double> s(20);
      std::vector<bool> p(20);
      for (std::size_t i = 0; i < 20; ++i) {
        s[i] = scores.at(i, k);
        p[i] = labels.at(i, k) > 0.5;
      }
      const double ap = testing::average_precision_rank_walk(s, p);
      if (ap < 0) {
        EXPECT_FALSE(r.per_class[k].has_value());
        continue;
      }
      ASSERT_TRUE(r.per_class[k].has_value());
      EXPECT_NEAR(*r.per_class[k], ap, 1e-12);
      sum += ap;
      ++counted;
    }
    EXPECT_NEAR(r.mean, sum / static_cast<double>(counted), 1e-12);
  }
}

TEST(Map, RaisingAPositiveNeverLowersItsAp) {
  CounterRng rng(derive_key(6, "map-mono"));
  for (int c = 0; c < 200; ++c) {
    Tensor scores({12, 1}), labels({12, 1});
    for (double& s : scores.vec()) s = rng.uniform();
    for (double& l : labels.vec()) l = rng.uniform() < 0.4 ? 1.0 : 0.0;
    const std::size_t pos = rng.below(12);
    labels.at(pos, 0) = 1.0;
    const double before = mean_average_precision(scores, labels).mean;
    scores.at(pos, 0) += rng.uniform() * 0.5;
    EXPECT_GE(mean_average_precision(scores, labels).mean, before - 1e-15);
  }
}

// ---- EER ----

std::vector<ScoredTrial> trials_of(const std::vector<double>& s, const std::vector<bool>& t) {
  std::vector<ScoredTrial> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.push_back({s[i], t[i]});
  return out;
}

TEST(Eer, Examples) {
  EXPECT_EQ(eer(trials_of({0.9, 0.9, 0.1, 0.1}, {true, true, false, false})).rate, 0.0);
  EXPECT_DOUBLE_EQ(eer(trials_of({0.9, 0.1, 0.8, 0.2}, {true, true, false, false})).rate, 0.5);
}

TEST(Eer, SingleClassRejected) {
  EXPECT_THROW(eer(trials_of({0.1, 0.2}, {true, true})), DataError);
  EXPECT_THROW(eer(trials_of({0.1, 0.2}, {false, false})), DataError);
}

struct RandomTrials {
  std::vector<double> scores;
  std::vector<bool> target;
};

RandomTrials random_trials(CounterRng& rng) {
  RandomTrials r;
  const std::size_t n = 2 + rng.below(30);
  for (std::size_t i = 0; i < n; ++i) {
    const bool t = i == 0 ? true : i == 1 ? false : rng.uniform() < 0.4;
    r.target.push_back(t);
    // Quantized scores give ties; the shift separates classes partially.
    r.scores.push_back(std::round((rng.normal() + (t ? 1.0 : 0.0)) * 4.0) / 4.0);
  }
  return r;
}

TEST(Eer, MatchesThresholdSweepOracle) {
  CounterRng rng(derive_key(7, "eer"));
  for (int c = 0; c < 100; ++c) {
    const RandomTrials r = random_trials(rng);
    const EerResult got = eer(trials_of(r.scores, r.target));
    const testing::EerOracle want = testing::eer_sweep_oracle(r.scores, r.target);
    EXPECT_NEAR(got.rate, want.rate, 1e-9) << "case " << c;
    EXPECT_GE(got.rate, 0.0);
    EXPECT_LE(got.rate, 1.0);
  }
}

TEST(Eer, LabelSwapAgreesWithOracle) {
  CounterRng rng(derive_key(8, "eer-swap"));
  for (int c = 0; c < 100; ++c) {
    RandomTrials r = random_trials(rng);
    r.target.flip();
    EXPECT_NEAR(eer(trials_of(r.scores, r.target)).rate, testing::eer_sweep_oracle(r.scores, r.target).rate, 1e-9);
  }
}

TEST(Eer, InvariantUnderMonotoneTransform) {
  CounterRng rng(derive_key(9, "eer-mono"));
  for (int c = 0; c < 100; ++c) {
    RandomTrials r = random_trials(rng);
    const double base = eer(trials_of(r.scores, r.target)).rate;
    for (double& s : r.scores) s = std::exp(3.0 * s) + 7.0;
    EXPECT_NEAR(eer(trials_of(r.scores, r.target)).rate, base, 1e-12);
  }
}

TEST(Eer, PerfectSeparationIsZero) {
  CounterRng rng(derive_key(10, "eer-sep"));
  for (int c = 0; c < 50; ++c) {
    std::vector<double> s;
    std::vector<bool> t;
    for (int i = 0; i < 10; ++i) {
      const bool tg = i % 3 == 0;
      s.push_back(tg ? 1.0 + rng.uniform() : -rng.uniform());
      t.push_back(tg);
    }
    EXPECT_EQ(eer(trials_of(s, t)).rate, 0.0);
  }
}

// ---- SV trials ----

TEST(SvTrials, CosineScores) {
  std::unordered_map<std::string, Tensor> emb;
  emb["a"] = Tensor({2}, {3.0, 0.0});
  emb["b"] = Tensor({2}, {0.0, -2.0});
  emb["c"] = Tensor({2}, {1.0, 1.0});
  const auto t = sv_trials_build(emb, {{"a", "a", true}, {"a", "b", false}, {"a", "c", true}});
  EXPECT_DOUBLE_EQ(t[0].score, 1.0);
  EXPECT_EQ(t[1].score, 0.0);
  EXPECT_NEAR(t[2].score, 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_TRUE(t[0].is_target);
  EXPECT_FALSE(t[1].is_target);
}

TEST(SvTrials, RandomPairsMatchDirectFormula) {
  std::unordered_map<std::string, Tensor> emb;
  for (int i = 0; i < 10; ++i) emb["u" + std::to_string(i)] = random_tensor({16}, 100 + i);
  CounterRng rng(11);
  for (int c = 0; c < 50; ++c) {
    const std::string a = "u" + std::to_string(rng.below(10)), b = "u" + std::to_string(rng.below(10));
    const Tensor& x = emb[a];
    const Tensor& y = emb[b];
    double xy = 0, xx = 0, yy = 0;
    for (std::size_t i = 0; i < 16; ++i) {
      xy += x[i] * y[i];
      xx += x[i] * x[i];
      yy += y[i] * y[i];
    }
    EXPECT_NEAR(sv_trials_build(emb, {{a, b, false}})[0].score, xy / std::sqrt(xx * yy), 1e-12);
  }
}

TEST(SvTrials, Errors) {
  std::unordered_map<std::string, Tensor> emb;
  emb["a"] = Tensor({2}, {1.0, 0.0});
  emb["z"] = Tensor({2}, {0.0, 0.0});
  EXPECT_THROW(sv_trials_build(emb, {{"a", "missing", true}}), DataError);
  EXPECT_THROW(sv_trials_build(emb, {{"a", "z", true}}), NumericError);
}

TEST(SvTrials, AllPairs) {
  Corpus c;
  c.name = "sv";
  c.task = Task::kSv;
  for (std::size_t i = 0; i < 4; ++i) {
    UtteranceRecord u;
    u.id = "s" + std::to_string(i);
    u.task = Task::kSv;
    u.speaker = i % 2;
    c.utterances.push_back(u);
  }
  const auto trials = all_pairs_trials(c);
  ASSERT_EQ(trials.size(), 6u);
  EXPECT_EQ(std::count_if(trials.begin(), trials.end(), [](const TrialSpec& t) { return t.is_target; }), 2);
}

// ---- decoding and distillation L1 on a small model ----

ModelConfig small_model_config() {
  ModelConfig cfg;
  cfg.encoder.num_blocks = 2;
  cfg.encoder.input_dim = 12;
  cfg.heads.vocab = 4;
  cfg.heads.predictor_dim = 8;
  cfg.heads.joiner_dim = 8;
  cfg.tap_asr = 2;
  cfg.tap_at = 2;
  cfg.tap_sv = 1;
  return cfg;
}

void fill(Parameter& p, double v) { std::fill(p.value.vec().begin(), p.value.vec().end(), v); }

TEST(GreedyDecode, AlwaysBlankJoinerGivesEmptyHypothesis) {
  Model m = model_init(small_model_config(), 1);
  add_finetune_heads(m, 1);
  fill(m.transducer->out_w, 0.0);
  fill(m.transducer->out_b, 0.0);
  m.transducer->out_b.value[0] = 5.0;
  EXPECT_TRUE(greedy_transducer_decode(m, random_tensor({24, 12}, 2)).empty());
}

TEST(GreedyDecode, RiggedJoinerEmitsFixedSequence) {
  Model m = model_init(small_model_config(), 1);
  add_finetune_heads(m, 1);
  TransducerHead& h = *m.transducer;
  // The predictor output becomes ~one-hot in the previous token and the joiner
  // maps each context to the next token of 3 1 2, then to blank.
  fill(h.embed, 0.0);
  for (std::size_t c = 0; c <= 4; ++c) h.embed.value.at(c, c) = 3.0;
  fill(h.pred_w, 0.0);
  fill(h.pred_b, 0.0);
  fill(h.pred_proj, 0.0);
  for (std::size_t i = 0; i < 8; ++i) {
    h.pred_w.value.at(i, i) = 1.0;
    h.pred_proj.value.at(i, i) = 1.0;
  }
  fill(h.enc_proj, 0.0);
  fill(h.joint_b, 0.0);
  fill(h.out_w, 0.0);
  fill(h.out_b, 0.0);
  const std::size_t next[5] = {3, 2, 0, 1, 0};  // context -> emitted token
  for (std::size_t c = 0; c <= 4; ++c) h.out_w.value.at(c, next[c]) = 20.0;
  EXPECT_EQ(greedy_transducer_decode(m, random_tensor({24, 12}, 3)), (std::vector<std::size_t>{3, 1, 2}));
}

TEST(GreedyDecode, EmissionCapIsTwiceTheFrames) {
  Model m = model_init(small_model_config(), 1);
  add_finetune_heads(m, 1);
  fill(m.transducer->out_w, 0.0);
  fill(m.transducer->out_b, 0.0);
  m.transducer->out_b.value[2] = 5.0;  // token 2 always wins
  const Tensor x = random_tensor({16, 12}, 4);
  const std::size_t frames = m.config.encoder.output_frames(16);
  EXPECT_EQ(greedy_transducer_decode(m, x), std::vector<std::size_t>(2 * frames, 2));
}

Corpus asr_corpus(const std::vector<std::size_t>& lengths) {
  Corpus c;
  c.name = "asr";
  c.task = Task::kAsr;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    UtteranceRecord u;
    u.id = "a" + std::to_string(i);
    u.task = Task::kAsr;
    u.features = random_tensor({lengths[i], 12}, 20 + i);
    u.transcript = std::vector<std::size_t>{1};
    c.utterances.push_back(u);
  }
  return c;
}

std::vector<Tensor> targets_for(Model& m, const Corpus& c, std::uint64_t seed) {
  std::vector<Tensor> t;
  for (const UtteranceRecord& u : c.utterances) {
    const Tensor y = infer_asr_projection(m, u.features);
    t.push_back(random_tensor(y.shape(), seed++));
  }
  return t;
}

double l1(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

TEST(KdL1Eval, ZeroWhenStudentMatchesTeacher) {
  Model m = model_init(small_model_config(), 1);
  const Corpus c = asr_corpus({16, 24});
  std::vector<Tensor> t;
  for (const auto& u : c.utterances) t.push_back(infer_asr_projection(m, u.features));
  EXPECT_EQ(kd_l1_eval(m, c, t), 0.0);
}

TEST(KdL1Eval, FrameWeightedMean) {
  Model m = model_init(small_model_config(), 1);
  const Corpus one = asr_corpus({16});
  const auto t1 = targets_for(m, one, 50);
  EXPECT_NEAR(kd_l1_eval(m, one, t1), l1(infer_asr_projection(m, one.utterances[0].features), t1[0]), 1e-14);

  const Corpus two = asr_corpus({16, 40});
  const auto t2 = targets_for(m, two, 60);
  const double a = l1(infer_asr_projection(m, two.utterances[0].features), t2[0]);
  const double b = l1(infer_asr_projection(m, two.utterances[1].features), t2[1]);
  EXPECT_NEAR(kd_l1_eval(m, two, t2), (4.0 * a + 10.0 * b) / 14.0, 1e-14);
}

TEST(KdL1Eval, EqualsTrainerLossOnEqualLengthUtterances) {
  Model m = model_init(small_model_config(), 1);
  const Corpus c = asr_corpus({20, 20, 20});
  const auto t = targets_for(m, c, 70);
  std::vector<TrainSample> batch;
  for (std::size_t i = 0; i < 3; ++i) batch.push_back({&c.utterances[i], &t[i]});
  const LossReport r = evaluate_batch(m, batch, Stage::kPretrain, {}, {});
  EXPECT_NEAR(kd_l1_eval(m, c, t), r[Task::kAsr].value, 1e-14);
}

TEST(KdL1Eval, MissingTargetsRejected) {
  Model m = model_init(small_model_config(), 1);
  const Corpus c = asr_corpus({16, 16});
  EXPECT_THROW(kd_l1_eval(m, c, targets_for(m, asr_corpus({16}), 80)), DataError);
}

TEST(EvalReport, JsonHoldsOnlyPresentMetrics) {
  EvalReport r;
  r.eer = EerResult{0.25, 0.5};
  const auto j = r.to_json();
  EXPECT_EQ(j.size(), 1u);
  EXPECT_DOUBLE_EQ(j["eer"]["rate"].get<double>(), 0.25);
  r.wer = wer({1, 2}, {1});
  r.kd_l1 = 0.5;
  const auto k = r.to_json();
  EXPECT_EQ(k.size(), 3u);
  EXPECT_EQ(k["wer"]["deletions"].get<std::size_t>(), 1u);
  EXPECT_DOUBLE_EQ(k["wer"]["rate"].get<double>(), 0.5);
}

}  // namespace
}  // namespace mtkd
