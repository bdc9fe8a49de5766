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

#include "mtkd/losses.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtkd/error.h"

namespace mtkd {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double log_sigmoid(double x) { return -softplus(-x); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

Tape& tape_of(const Var& a, const Var& b) {
  if (!a.tape() || a.tape() != b.tape()) throw ContractError("operands live on different tapes");
  return *a.tape();
}

// Binary cross-entropy between target probabilities p and sigmoid(student).
// When `teacher` is bound, p = sigmoid(teacher) and its gradient is produced too.
Var bce_impl(const Var* teacher, std::vector<double> p, Var student) {
  const Tensor& s = student.value();
  const std::size_t k = s.size();
  const double log_floor = std::log(kProbFloor);
  std::vector<double> lq(k), l1q(k);
  double loss = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    lq[i] = log_sigmoid(s[i]);
    l1q[i] = log_sigmoid(-s[i]);
    const double a = std::max(lq[i], log_floor);
    const double b = std::max(l1q[i], log_floor);
    loss -= p[i] * a + (1.0 - p[i]) * b;
  }
  loss /= static_cast<double>(k);
  Tape& tape = *student.tape();
  std::vector<Var> inputs{student};
  if (teacher) inputs.push_back(*teacher);
  Var tv = teacher ? *teacher : Var();
  const bool has_teacher = teacher != nullptr;
  return tape.record(
      Tensor::scalar(loss), inputs,
      [student, tv, has_teacher, p = std::move(p), lq = std::move(lq), l1q = std::move(l1q),
       log_floor](Tape& t, std::span<const double> g, const Tensor&) {
        const std::size_t k = p.size();
        const double scale = g[0] / static_cast<double>(k);
        if (t.requires_grad(student)) {
          std::span<double> gs = t.grad_buffer(student);
          const Tensor& s = t.value(student);
          for (std::size_t i = 0; i < k; ++i) {
            const double q = sigmoid(s[i]);
            double d = 0.0;
            if (lq[i] >= log_floor) d -= p[i] * (1.0 - q);
            if (l1q[i] >= log_floor) d += (1.0 - p[i]) * q;
            gs[i] += scale * d;
          }
        }
        if (has_teacher && t.requires_grad(tv)) {
          std::span<double> gt = t.grad_buffer(tv);
          for (std::size_t i = 0; i < k; ++i) {
            const double dp = -(std::max(lq[i], log_floor) - std::max(l1q[i], log_floor));
            gt[i] += scale * dp * p[i] * (1.0 - p[i]);
          }
        }
      });
}

}  // namespace

std::string_view task_name(Task task) {
  switch (task) {
    case Task::kAsr: return "asr";
    case Task::kAt: return "at";
    case Task::kSv: return "sv";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  for (Task t : kAllTasks) {
    if (task_name(t) == name) return t;
  }
  throw ConfigError("unknown task '" + std::string(name) + "' (expected asr, at or sv)");
}

double LossWeights::operator[](Task task) const {
  switch (task) {
    case Task::kAsr: return asr;
    case Task::kAt: return at;
    case Task::kSv: return sv;
  }
  return 0.0;
}

void LossWeights::validate() const {
  for (Task t : kAllTasks) {
    const double w = (*this)[t];
    if (!std::isfinite(w) || w < 0.0) {
      throw ConfigError("loss weight for " + std::string(task_name(t)) +
                        " must be finite and non-negative");
    }
  }
  if (asr == 0.0 && at == 0.0 && sv == 0.0) throw ConfigError("all loss weights are zero");
}

Var kd_asr_l1(Var teacher, Var student) {
  require_same_shape(teacher, student, "kd_asr_l1");
  if (teacher.size() == 0) throw ShapeError("kd_asr_l1: empty inputs");
  return mean(abs(sub(student, teacher)));
}

Var kd_at_bce(Var teacher_logits, Var student_logits) {
  require_same_shape(teacher_logits, student_logits, "kd_at_bce");
  tape_of(teacher_logits, student_logits);
  if (student_logits.size() == 0) throw ShapeError("kd_at_bce: empty inputs");
  const Tensor& z = teacher_logits.value();
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(z[i]);
  return bce_impl(&teacher_logits, std::move(p), student_logits);
}

Var at_bce_supervised(Var student_logits, const Tensor& label) {
  if (label.shape() != student_logits.shape()) {
    throw ShapeError("at_bce_supervised: label " + shape_str(label.shape()) + " vs logits " +
                     shape_str(student_logits.shape()));
  }
  if (label.size() == 0) throw ShapeError("at_bce_supervised: empty inputs");
  std::vector<double> p(label.data().begin(), label.data().end());
  for (double v : p) {
    if (v != 0.0 && v != 1.0) throw DataError("at_bce_supervised: label entries must be 0 or 1");
  }
  return bce_impl(nullptr, std::move(p), student_logits);
}

Var kd_sv_cosine(Var teacher, Var student) {
  require_same_shape(teacher, student, "kd_sv_cosine");
  Tape& tape = tape_of(teacher, student);
  const Tensor& u = teacher.value();
  const Tensor& v = student.value();
  double dot = 0.0, nu2 = 0.0, nv2 = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu2 += u[i] * u[i];
    nv2 += v[i] * v[i];
  }
  if (nu2 == 0.0) throw DataError("kd_sv_cosine: teacher vector has zero norm");
  const double floor2 = kCosineNormFloor * kCosineNormFloor;
  const bool floored = nv2 < floor2;
  const double nv2f = floored ? floor2 : nv2;
  const double denom = std::sqrt(nu2 * nv2f);
  const double cos = dot / denom;
  return tape.record(Tensor::scalar(1.0 - cos), {teacher, student},
                     [teacher, student, nu2, nv2f, denom, cos, floored](
                         Tape& t, std::span<const double> g, const Tensor&) {
                       const Tensor& u = t.value(teacher);
                       const Tensor& v = t.value(student);
                       if (t.requires_grad(student)) {
                         std::span<double> gv = t.grad_buffer(student);
                         for (std::size_t i = 0; i < v.size(); ++i) {
                           const double d = u[i] / denom - (floored ? 0.0 : cos * v[i] / nv2f);
                           gv[i] -= g[0] * d;
                         }
                       }
                       if (t.requires_grad(teacher)) {
                         std::span<double> gu = t.grad_buffer(teacher);
                         for (std::size_t i = 0; i < u.size(); ++i) {
                           gu[i] -= g[0] * (v[i] / denom - cos * u[i] / nu2);
                         }
                       }
                     });
}

Var transducer_loss(Var log_probs, const std::vector<std::size_t>& targets) {
  const Tensor& lp = log_probs.value();
  if (lp.rank() != 3) {
    throw ShapeError("transducer_loss: expected [T x (U+1) x (V+1)] log-probs, got " +
                     shape_str(lp.shape()));
  }
  const std::size_t frames = lp.dim(0), u1 = lp.dim(1), v1 = lp.dim(2);
  if (frames == 0) throw ShapeError("transducer_loss: no encoder frames");
  if (u1 != targets.size() + 1) {
    throw ShapeError("transducer_loss: lattice has " + std::to_string(u1) +
                     " label positions for " + std::to_string(targets.size()) + " targets");
  }
  if (v1 < 2) throw ShapeError("transducer_loss: vocabulary must hold blank plus one token");
  for (std::size_t y : targets) {
    if (y == 0 || y >= v1) {
      throw DataError("transducer_loss: token " + std::to_string(y) + " outside 1.." +
                      std::to_string(v1 - 1));
    }
  }
  auto at = [u1, v1](std::size_t t, std::size_t u, std::size_t k) { return (t * u1 + u) * v1 + k; };
  const std::size_t big_u = u1 - 1;
  std::vector<double> alpha(frames * u1, kNegInf);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t u = 0; u <= big_u; ++u) {
      double a = (t == 0 && u == 0) ? 0.0 : kNegInf;
      if (t > 0) a = logaddexp(a, alpha[(t - 1) * u1 + u] + lp[at(t - 1, u, 0)]);
      if (u > 0) a = logaddexp(a, alpha[t * u1 + u - 1] + lp[at(t, u - 1, targets[u - 1])]);
      alpha[t * u1 + u] = a;
    }
  }
  const double log_z = alpha[(frames - 1) * u1 + big_u] + lp[at(frames - 1, big_u, 0)];
  if (!std::isfinite(log_z)) throw NumericError("transducer_loss: lattice has zero total probability");
  Tape& tape = *log_probs.tape();
  return tape.record(
      Tensor::scalar(-log_z), {log_probs},
      [log_probs, targets, alpha = std::move(alpha), log_z, frames, u1, at](
          Tape& t, std::span<const double> g, const Tensor&) {
        const Tensor& lp = t.value(log_probs);
        const std::size_t big_u = u1 - 1;
        std::vector<double> beta(frames * u1, kNegInf);
        for (std::size_t tt = frames; tt-- > 0;) {
          for (std::size_t u = u1; u-- > 0;) {
            double b = (tt == frames - 1 && u == big_u) ? lp[at(tt, u, 0)] : kNegInf;
            if (tt + 1 < frames) b = logaddexp(b, beta[(tt + 1) * u1 + u] + lp[at(tt, u, 0)]);
            if (u < big_u) b = logaddexp(b, beta[tt * u1 + u + 1] + lp[at(tt, u, targets[u])]);
            beta[tt * u1 + u] = b;
          }
        }
        std::span<double> gl = t.grad_buffer(log_probs);
        for (std::size_t tt = 0; tt < frames; ++tt) {
          for (std::size_t u = 0; u <= big_u; ++u) {
            const double a = alpha[tt * u1 + u];
            if (a == kNegInf) continue;
            double next_blank = kNegInf;
            if (tt + 1 < frames) next_blank = beta[(tt + 1) * u1 + u];
            else if (u == big_u) next_blank = 0.0;
            if (next_blank != kNegInf) {
              gl[at(tt, u, 0)] -= g[0] * std::exp(a + lp[at(tt, u, 0)] + next_blank - log_z);
            }
            if (u < big_u) {
              const std::size_t k = targets[u];
              gl[at(tt, u, k)] -= g[0] * std::exp(a + lp[at(tt, u, k)] + beta[tt * u1 + u + 1] - log_z);
            }
          }
        }
      });
}

Var sv_cross_entropy(Var logits, std::size_t speaker) {
  if (logits.value().rank() != 1) {
    throw ShapeError("sv_cross_entropy: expected [S] logits, got " + shape_str(logits.shape()));
  }
  if (speaker >= logits.size()) {
    throw DataError("sv_cross_entropy: speaker " + std::to_string(speaker) + " outside 0.." +
                    std::to_string(logits.size() == 0 ? 0 : logits.size() - 1));
  }
  return neg(pick(log_softmax(logits, 0), speaker));
}

double LossReport::sample_scale(Task task, const LossWeights& w) const {
  const TaskLoss& tl = (*this)[task];
  return tl.count == 0 ? 0.0 : w[task] / static_cast<double>(tl.count);
}

LossReport aggregate_losses(const std::vector<SampleLoss>& samples, const LossWeights& w) {
  if (samples.empty()) throw ContractError("loss aggregation: empty batch");
  LossReport r;
  for (const SampleLoss& s : samples) {
    TaskLoss& tl = r.per_task[static_cast<std::size_t>(s.task)];
    tl.value += s.value;
    ++tl.count;
  }
  bool any_weight = false;
  for (Task t : kAllTasks) {
    TaskLoss& tl = r.per_task[static_cast<std::size_t>(t)];
    if (tl.count == 0) continue;
    tl.value /= static_cast<double>(tl.count);
    r.total += w[t] * tl.value;
    any_weight = any_weight || w[t] > 0.0;
  }
  if (!any_weight) throw ConfigError("loss weights are zero for every task present in the batch");
  return r;
}

LossReport kd_combined(const std::vector<SampleLoss>& samples, const LossWeights& w) {
  return aggregate_losses(samples, w);
}

LossReport naive_mtl_loss(const std::vector<SampleLoss>& samples, const LossWeights& w) {
  return aggregate_losses(samples, w);
}

}  // namespace mtkd
