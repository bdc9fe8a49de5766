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

#include "mtkd/init.h"

#include <cmath>

#include "mtkd/rng.h"

namespace mtkd {

Parameter uniform_parameter(std::string name, std::string group, Shape shape,
                            std::size_t fan_in, std::uint64_t seed) {
  Tensor value(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  CounterRng rng(derive_key(seed, name));
  for (double& v : value.vec()) v = rng.uniform(-bound, bound);
  return Parameter(std::move(name), std::move(group), std::move(value));
}

Parameter constant_parameter(std::string name, std::string group, Shape shape, double value) {
  return Parameter(std::move(name), std::move(group), Tensor::filled(std::move(shape), value));
}

}  // namespace mtkd
