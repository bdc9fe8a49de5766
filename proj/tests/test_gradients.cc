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

#include "support/grad_suite.h"

namespace mtkd::testing {
namespace {

class GradientCase : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientCase, FiniteDifferencesAgreeOnTwentyInstances) {
  const GradCase& c = gradient_cases()[GetParam()];
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const GradCheckResult r = c.run(seed);
    ASSERT_GT(r.checked, 0u) << c.name;
    EXPECT_LT(r.max_rel_error, 1e-4) << c.name << " seed " << seed << ": " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradientCase,
                         ::testing::Range<std::size_t>(0, gradient_cases().size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                           return gradient_cases()[info.param].name;
                         });

}  // namespace
}  // namespace mtkd::testing
