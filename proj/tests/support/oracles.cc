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

#include "oracles.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace mtkd::testing {

Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
      c.at(i, j) = s;
    }
  }
  return c;
}

Tensor conv1d_oracle(const Tensor& x, const Tensor& kernel, std::size_t stride) {
  const std::size_t t_in = x.dim(0), d_in = x.dim(1);
  const std::size_t w = kernel.dim(0), d_out = kernel.dim(2);
  const std::size_t t_out = (t_in - w) / stride + 1;
  Tensor y({t_out, d_out});
  for (std::size_t t = 0; t < t_out; ++t) {
    for (std::size_t o = 0; o < d_out; ++o) {
      double s = 0.0;
      for (std::size_t dw = 0; dw < w; ++dw) {
        for (std::size_t i = 0; i < d_in; ++i) {
          s += x.at(t * stride + dw, i) * kernel[(dw * d_in + i) * d_out + o];
        }
      }
      y.at(t, o) = s;
    }
  }
  return y;
}

namespace {

void enumerate_paths(const Tensor& lp, const std::vector<std::size_t>& y, std::size_t t,
                     std::size_t u, double acc, std::vector<double>& out) {
  const std::size_t frames = lp.dim(0), u1 = lp.dim(1), v1 = lp.dim(2);
  auto at = [&](std::size_t tt, std::size_t uu, std::size_t k) { return lp[(tt * u1 + uu) * v1 + k]; };
  if (t == frames - 1 && u == y.size()) {
    out.push_back(acc + at(t, u, 0));
    return;
  }
  if (t + 1 < frames) enumerate_paths(lp, y, t + 1, u, acc + at(t, u, 0), out);
  if (u < y.size()) enumerate_paths(lp, y, t, u + 1, acc + at(t, u, y[u]), out);
}

std::size_t edits(const std::vector<std::size_t>& r, std::size_t i,
                  const std::vector<std::size_t>& h, std::size_t j) {
  if (i == r.size()) return h.size() - j;
  if (j == h.size()) return r.size() - i;
  std::size_t best = 1 + edits(r, i + 1, h, j);       // delete r[i]
  best = std::min(best, 1 + edits(r, i, h, j + 1));   // insert h[j]
  best = std::min(best, (r[i] == h[j] ? 0 : 1) + edits(r, i + 1, h, j + 1));
  return best;
}

}  // namespace

double transducer_bruteforce(const Tensor& log_probs, const std::vector<std::size_t>& targets) {
  std::vector<double> paths;
  enumerate_paths(log_probs, targets, 0, 0, 0.0, paths);
  double total = 0.0;
  for (double lp : paths) total += std::exp(lp);
  return -std::log(total);
}

std::size_t edit_distance_bruteforce(const std::vector<std::size_t>& ref,
                                     const std::vector<std::size_t>& hyp) {
  return edits(ref, 0, hyp, 0);
}

double average_precision_rank_walk(const std::vector<double>& scores,
                                   const std::vector<bool>& positive) {
  const std::size_t n = scores.size();
  auto ranked_before_or_same = [&](std::size_t j, std::size_t i) {
    return scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
  };
  double sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!positive[i]) continue;
    ++positives;
    std::size_t rank = 0, hits = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (ranked_before_or_same(j, i)) {
        ++rank;
        if (positive[j]) ++hits;
      }
    }
    sum += static_cast<double>(hits) / static_cast<double>(rank);
  }
  return positives == 0 ? -1.0 : sum / static_cast<double>(positives);
}

EerOracle eer_sweep_oracle(const std::vector<double>& scores, const std::vector<bool>& target) {
  std::set<double> distinct(scores.begin(), scores.end());
  std::vector<double> thresholds(distinct.begin(), distinct.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());
  std::vector<double> far, frr;
  for (double th : thresholds) {
    double fa = 0, nt = 0, fr = 0, tg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool accept = scores[i] >= th;
      if (target[i]) {
        ++tg;
        if (!accept) ++fr;
      } else {
        ++nt;
        if (accept) ++fa;
      }
    }
    far.push_back(fa / nt);
    frr.push_back(fr / tg);
  }
  for (std::size_t j = 0; j < thresholds.size(); ++j) {
    const double d = far[j] - frr[j];
    if (d > 0) continue;
    if (d == 0 || j == 0) return {far[j], thresholds[j]};
    const double d0 = far[j - 1] - frr[j - 1];
    const double w = d0 / (d0 - d);
    const double rate = far[j - 1] + w * (far[j] - far[j - 1]);
    const double th = std::isfinite(thresholds[j])
                          ? thresholds[j - 1] + w * (thresholds[j] - thresholds[j - 1])
                          : thresholds[j - 1];
    return {rate, th};
  }
  throw std::logic_error("unreachable: FAR - FRR is negative at +inf");
}

double chi_square_sf(double x, std::size_t dof) {
  if (dof == 1) return std::erfc(std::sqrt(x / 2.0));
  // Regularized upper incomplete gamma Q(dof/2, x/2) by series for P.
  const double a = static_cast<double>(dof) / 2.0, z = x / 2.0;
  double term = 1.0 / a, sum = term;
  for (int n = 1; n < 1000; ++n) {
    term *= z / (a + n);
    sum += term;
    if (term < sum * 1e-16) break;
  }
  const double p = std::exp(-z + a * std::log(z) - std::lgamma(a)) * sum;
  return 1.0 - p;
}

}  // namespace mtkd::testing
