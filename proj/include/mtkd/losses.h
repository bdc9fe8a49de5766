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

// Training objectives: the three distillation losses, the supervised task
// losses, and the per-task weighted aggregation shared by the KD and naive
// multi-task objectives.

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mtkd/autodiff.h"

namespace mtkd {

enum class Task : unsigned char { kAsr = 0, kAt = 1, kSv = 2 };

inline constexpr std::array<Task, 3> kAllTasks = {Task::kAsr, Task::kAt, Task::kSv};

std::string_view task_name(Task task);  // "asr", "at", "sv"
Task parse_task(std::string_view name);  // throws ConfigError

struct LossWeights {
  double asr = 1.0;
  double at = 1.0;
  double sv = 1.0;

  double operator[](Task task) const;
  void validate() const;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

// Mean absolute difference over all elements of two [T' x D_kd] tensors.
Var kd_asr_l1(Var teacher, Var student);

// Log-probability floor used by every binary cross-entropy term.
inline constexpr double kProbFloor = 1e-7;

// Mean over K of -[p log q + (1-p) log(1-q)] with p = sigmoid(teacher),
// q = sigmoid(student). Each log is floored at log(1e-7); a floored term
// contributes no gradient.
Var kd_at_bce(Var teacher_logits, Var student_logits);

// Same loss with p given directly as a multi-hot label.
Var at_bce_supervised(Var student_logits, const Tensor& label);

// 1 - <u, v> / (|u| |v|). The student norm is floored at 1e-12; a zero teacher
// vector is an invalid label.
inline constexpr double kCosineNormFloor = 1e-12;
Var kd_sv_cosine(Var teacher, Var student);

// Negative log of the total probability of all monotone alignments through a
// [T' x (U+1) x (V+1)] lattice of log-probabilities, blank at index 0.
Var transducer_loss(Var log_probs, const std::vector<std::size_t>& targets);

// -log softmax(logits)[speaker].
Var sv_cross_entropy(Var logits, std::size_t speaker);

struct SampleLoss {
  Task task;
  double value;
};

struct TaskLoss {
  double value = 0.0;     // mean over the task's samples
  std::size_t count = 0;  // samples that contributed
};

struct LossReport {
  double total = 0.0;
  std::array<TaskLoss, 3> per_task{};

  const TaskLoss& operator[](Task t) const { return per_task[static_cast<std::size_t>(t)]; }
  bool has(Task t) const { return (*this)[t].count > 0; }
  // d(total)/d(sample loss) for a sample of `task`: lambda_task / count_task.
  double sample_scale(Task task, const LossWeights& w) const;
};

// Per-task mean over that task's samples, then the lambda-weighted sum over the
// tasks present. Sums run in sample order.
LossReport aggregate_losses(const std::vector<SampleLoss>& samples, const LossWeights& w);

// Combined distillation objective over per-sample KD losses.
LossReport kd_combined(const std::vector<SampleLoss>& samples, const LossWeights& w);

// Naive multi-task objective over per-sample supervised losses.
LossReport naive_mtl_loss(const std::vector<SampleLoss>& samples, const LossWeights& w);

}  // namespace mtkd
