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

// Central finite-difference gradient checking for tape-built functions.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mtkd/autodiff.h"

namespace mtkd::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "input 1 [7]: analytic .. numeric .."
  std::size_t checked = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  // Relative error denominator floor; smaller gradients are compared absolutely.
  double floor = 1e-5;
  // Coordinates checked per tensor; 0 checks all.
  std::size_t max_coords = 0;
  std::uint64_t seed = 7;
};

using InputLossFn = std::function<Var(Tape&, const std::vector<Var>&)>;
using ParamLossFn = std::function<Var(const Binder&)>;

// Differentiates fn with respect to every input tensor.
GradCheckResult check_input_grads(const InputLossFn& fn, std::vector<Tensor> inputs,
                                  const GradCheckOptions& opts = {});

// Differentiates fn with respect to the listed parameters, perturbing them in place.
GradCheckResult check_param_grads(const ParamLossFn& fn, const std::vector<Parameter*>& params,
                                  const GradCheckOptions& opts = {});

// Uniform random tensor in [lo, hi).
Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

}  // namespace mtkd::testing
