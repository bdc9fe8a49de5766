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

#include "mtkd/metrics.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "mtkd/error.h"
#include "mtkd/losses.h"

namespace mtkd {

double WerCounts::rate() const {
  if (ref_tokens == 0) throw DataError("WER of an empty reference");
  return static_cast<double>(errors()) / static_cast<double>(ref_tokens);
}

WerCounts& WerCounts::operator+=(const WerCounts& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  ref_tokens += o.ref_tokens;
  return *this;
}

WerCounts wer(const std::vector<std::size_t>& ref, const std::vector<std::size_t>& hyp) {
  if (ref.empty()) throw DataError("wer: empty reference");
  const std::size_t n = ref.size(), m = hyp.size();
  struct Cell {
    std::size_t cost, s, d, i;
  };
  // Ties prefer substitution, then deletion, then insertion.
  std::vector<Cell> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = {j, 0, 0, j};
  for (std::size_t r = 1; r <= n; ++r) {
    cur[0] = {r, 0, r, 0};
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = ref[r - 1] == hyp[j - 1];
      Cell best = prev[j - 1];
      best.cost += same ? 0 : 1;
      best.s += same ? 0 : 1;
      if (prev[j].cost + 1 < best.cost) best = {prev[j].cost + 1, prev[j].s, prev[j].d + 1, prev[j].i};
      if (cur[j - 1].cost + 1 < best.cost) best = {cur[j - 1].cost + 1, cur[j - 1].s, cur[j - 1].d, cur[j - 1].i + 1};
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  return {prev[m].s, prev[m].d, prev[m].i, n};
}

MapResult mean_average_precision(const Tensor& scores, const Tensor& labels) {
  if (scores.rank() != 2 || scores.shape() != labels.shape()) {
    throw ShapeError("mean_average_precision: scores " + shape_str(scores.shape()) + " and labels " +
                     shape_str(labels.shape()) + " must both be [N x K]");
  }
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  MapResult out;
  out.per_class.resize(k);
  std::vector<std::size_t> order(n);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores.at(a, c) > scores.at(b, c); });
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (labels.at(order[r], c) > 0.5) {
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(r + 1);
      }
    }
    if (hits == 0) continue;
    out.per_class[c] = sum / static_cast<double>(hits);
    total += *out.per_class[c];
    ++counted;
  }
  if (counted == 0) throw DataError("mean_average_precision: no class has a positive example");
  out.mean = total / static_cast<double>(counted);
  return out;
}

EerResult eer(const std::vector<ScoredTrial>& trials) {
  std::vector<ScoredTrial> sorted = trials;
  std::size_t targets = 0;
  for (const ScoredTrial& t : sorted) {
    if (!std::isfinite(t.score)) throw DataError("eer: non-finite trial score");
    targets += t.is_target;
  }
  const std::size_t nontargets = sorted.size() - targets;
  if (targets == 0 || nontargets == 0) throw DataError("eer: need at least one target and one non-target trial");
  std::sort(sorted.begin(), sorted.end(), [](const ScoredTrial& a, const ScoredTrial& b) { return a.score < b.score; });
  const double nt = static_cast<double>(nontargets), tg = static_cast<double>(targets);
  // Walk thresholds upward; below the current threshold lie the rejected trials.
  std::size_t rejected_targets = 0, rejected_nontargets = 0, i = 0;
  double prev_far = 0.0, prev_frr = 0.0, prev_th = 0.0;
  bool first = true;
  while (true) {
    const double th = i < sorted.size() ? sorted[i].score : INFINITY;
    const double far = static_cast<double>(nontargets - rejected_nontargets) / nt;
    const double frr = static_cast<double>(rejected_targets) / tg;
    const double d = far - frr;
    if (d <= 0) {
      if (d == 0 || first) return {far, th};
      const double d0 = prev_far - prev_frr;
      const double w = d0 / (d0 - d);
      const double rate = prev_far + w * (far - prev_far);
      return {rate, std::isfinite(th) ? prev_th + w * (th - prev_th) : prev_th};
    }
    prev_far = far;
    prev_frr = frr;
    prev_th = th;
    first = false;
    while (i < sorted.size() && sorted[i].score == th) {
      (sorted[i].is_target ? rejected_targets : rejected_nontargets) += 1;
      ++i;
    }
  }
}

std::vector<ScoredTrial> sv_trials_build(const std::unordered_map<std::string, Tensor>& embeddings,
                                         const std::vector<TrialSpec>& trials) {
  auto lookup = [&](const std::string& id) -> const Tensor& {
    auto it = embeddings.find(id);
    if (it == embeddings.end()) throw DataError("sv trials: no embedding for '" + id + "'");
    return it->second;
  };
  std::vector<ScoredTrial> out;
  out.reserve(trials.size());
  for (const TrialSpec& t : trials) {
    const Tensor& a = lookup(t.a);
    const Tensor& b = lookup(t.b);
    if (a.size() != b.size()) throw ShapeError("sv trials: embedding sizes differ");
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ab += a[i] * b[i];
      aa += a[i] * a[i];
      bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) {
      throw NumericError("sv trials: zero-norm embedding for '" + (aa == 0.0 ? t.a : t.b) + "'");
    }
    out.push_back({ab / std::sqrt(aa * bb), t.is_target});
  }
  return out;
}

std::vector<TrialSpec> all_pairs_trials(const Corpus& corpus) {
  std::vector<TrialSpec> out;
  const auto& u = corpus.utterances;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!u[i].speaker) throw DataError("sv trials: utterance '" + u[i].id + "' has no speaker");
    for (std::size_t j = i + 1; j < u.size(); ++j) {
      if (!u[j].speaker) throw DataError("sv trials: utterance '" + u[j].id + "' has no speaker");
      out.push_back({u[i].id, u[j].id, *u[i].speaker == *u[j].speaker});
    }
  }
  return out;
}

std::vector<std::size_t> greedy_transducer_decode(Model& model, const Tensor& features) {
  if (!model.transducer) throw ContractError("greedy_transducer_decode: model has no transducer head");
  TransducerHead& head = *model.transducer;
  Tape tape;
  const Binder bind = Binder::inference(tape);
  const LayerOutputs out = encoder_forward(bind, model.encoder, features);
  Var enc = tap(out, model.config.tap_asr);
  const std::size_t frames = enc.dim(0), cap = 2 * frames;
  std::vector<std::size_t> hyp;
  // The predictor sees only the previous token; row 1 of predict({y}) is its output for y.
  auto predictor = [&](std::optional<std::size_t> last) {
    return last ? slice_rows(transducer_predict(bind, head, {*last}), 1, 1)
                : transducer_predict(bind, head, {});
  };
  Var pred = predictor(std::nullopt);
  std::size_t t = 0;
  while (t < frames) {
    const Tensor lp = transducer_joint(bind, head, slice_rows(enc, t, 1), pred).value();
    const auto best = std::max_element(lp.vec().begin(), lp.vec().end()) - lp.vec().begin();
    if (best == 0 || hyp.size() >= cap) {
      ++t;
      continue;
    }
    hyp.push_back(static_cast<std::size_t>(best));
    pred = predictor(hyp.back());
  }
  return hyp;
}

double kd_l1_eval(Model& model, const Corpus& corpus, const std::vector<Tensor>& teacher) {
  if (teacher.size() != corpus.utterances.size()) {
    throw DataError("kd_l1_eval: " + std::to_string(teacher.size()) + " teacher targets for " +
                    std::to_string(corpus.utterances.size()) + " utterances");
  }
  const std::size_t n = teacher.size();
  std::vector<double> loss(n), weight(n);
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      Tape tape;
      Var student = tape.constant(infer_asr_projection(model, corpus.utterances[i].features));
      loss[i] = kd_asr_l1(tape.constant(teacher[i]), student).value().item();
      weight[i] = static_cast<double>(teacher[i].dim(0));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += loss[i] * weight[i];
    den += weight[i];
  }
  if (den == 0.0) throw DataError("kd_l1_eval: empty corpus");
  return num / den;
}

namespace {

template <typename F>
void parallel_over(std::size_t n, F&& f) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      f(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

WerCounts evaluate_wer(Model& model, const Corpus& corpus) {
  std::vector<WerCounts> per(corpus.utterances.size());
  parallel_over(per.size(), [&](std::size_t i) {
    const UtteranceRecord& u = corpus.utterances[i];
    if (!u.transcript) throw DataError("evaluate_wer: '" + u.id + "' has no transcript");
    per[i] = wer(*u.transcript, greedy_transducer_decode(model, u.features));
  });
  WerCounts total;
  for (const WerCounts& w : per) total += w;
  return total;
}

MapResult evaluate_map(Model& model, const Corpus& corpus) {
  const std::size_t n = corpus.utterances.size(), k = corpus.num_classes;
  Tensor scores({n, k}), labels({n, k});
  parallel_over(n, [&](std::size_t i) {
    const UtteranceRecord& u = corpus.utterances[i];
    if (!u.events) throw DataError("evaluate_map: '" + u.id + "' has no event label");
    const Tensor z = infer_at_logits(model, u.features);
    for (std::size_t c = 0; c < k; ++c) {
      scores.at(i, c) = z[c];
      labels.at(i, c) = (*u.events)[c];
    }
  });
  return mean_average_precision(scores, labels);
}

EerResult evaluate_eer(Model& model, const Corpus& corpus) {
  std::vector<Tensor> emb(corpus.utterances.size());
  parallel_over(emb.size(), [&](std::size_t i) { emb[i] = infer_sv_embedding(model, corpus.utterances[i].features); });
  std::unordered_map<std::string, Tensor> by_id;
  for (std::size_t i = 0; i < emb.size(); ++i) by_id.emplace(corpus.utterances[i].id, std::move(emb[i]));
  return eer(sv_trials_build(by_id, all_pairs_trials(corpus)));
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  if (wer) {
    j["wer"] = {{"substitutions", wer->substitutions},
                {"deletions", wer->deletions},
                {"insertions", wer->insertions},
                {"ref_tokens", wer->ref_tokens},
                {"rate", wer->rate()}};
  }
  if (map) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& ap : map->per_class) per.push_back(ap ? nlohmann::json(*ap) : nlohmann::json(nullptr));
    j["map"] = {{"per_class", per}, {"mean", map->mean}};
  }
  if (eer) j["eer"] = {{"rate", eer->rate}, {"threshold", eer->threshold}};
  if (kd_l1) j["kd_l1"] = *kd_l1;
  return j;
}

}  // namespace mtkd
