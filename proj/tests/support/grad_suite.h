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

// Registry of randomized finite-difference gradient cases covering every
// differentiable operation, head and loss.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gradcheck.h"

namespace mtkd::testing {

struct GradCase {
  std::string name;
  std::function<GradCheckResult(std::uint64_t seed)> run;
};

const std::vector<GradCase>& gradient_cases();

}  // namespace mtkd::testing
