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

// Deterministic parameter initialization.

#pragma once

#include <cstdint>
#include <string>

#include "mtkd/autodiff.h"

namespace mtkd {

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], drawn from a stream keyed by
// (seed, name) so a parameter's values do not depend on creation order.
Parameter uniform_parameter(std::string name, std::string group, Shape shape,
                            std::size_t fan_in, std::uint64_t seed);

Parameter constant_parameter(std::string name, std::string group, Shape shape, double value);

}  // namespace mtkd
