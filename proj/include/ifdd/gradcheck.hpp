// Copyright (c) 2026 The IFDD Authors. All Rights Reserved.
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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ifdd/autodiff.hpp"

namespace ifdd {

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  std::size_t checked = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Upper bound on entries probed per parameter tensor; larger tensors are
  /// subsampled uniformly at random.
  std::size_t max_entries_per_param = std::numeric_limits<std::size_t>::max();
  std::uint64_t seed = 0;
};

/// |a − n| / max(floor, |a| + |n|).
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max(floor, std::abs(analytic) + std::abs(numeric));
}

/// Denominator floor for a central difference of a loss of magnitude
/// `loss`: 1e5 times its rounding resolution eps·|loss|/h. Gradients below
/// the floor are compared in absolute rather than relative terms.
inline double difference_floor(double loss, double step) {
  return std::max(1e-8, 1e5 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss)) / step);
}

/// Compares reverse-mode gradients of `loss_fn` against central differences.
/// `loss_fn` must rebuild the graph on every call and return a scalar.
template <class LossFn>
GradCheckResult finite_diff_check(LossFn&& loss_fn, const std::vector<std::pair<std::string, Var<double>>>& params,
                                  const GradCheckOptions& opt = {}) {
  for (const auto& [_, p] : params) {
    Var<double> handle = p;
    handle.zero_grad();
  }
  Var<double> loss = loss_fn();
  if (!std::isfinite(loss.value()[0])) throw NumericError("non-finite loss in gradient check");
  const double floor = difference_floor(loss.value()[0], opt.step);
  backward(loss);

  auto eval = [&]() {
    NoGradGuard guard;
    const double v = loss_fn().value()[0];
    if (!std::isfinite(v)) throw NumericError("non-finite loss while probing finite differences");
    return v;
  };

  std::mt19937_64 rng(opt.seed);
  GradCheckResult res;
  for (const auto& [name, p] : params) {
    Var<double> param = p;
    const Tensor<double> analytic = param.grad();
    std::vector<std::size_t> entries(param.numel());
    std::iota(entries.begin(), entries.end(), 0);
    if (entries.size() > opt.max_entries_per_param) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(opt.max_entries_per_param);
      std::sort(entries.begin(), entries.end());
    }
    for (std::size_t i : entries) {
      double& v = param.mutable_value()[i];
      const double saved = v;
      v = saved + opt.step;
      const double up = eval();
      v = saved - opt.step;
      const double down = eval();
      v = saved;
      const double numeric = (up - down) / (2 * opt.step);
      const double err = relative_error(analytic[i], numeric, floor);
      ++res.checked;
      if (err > res.max_rel_error || res.worst_param.empty()) {
        res.max_rel_error = std::max(err, res.max_rel_error);
        res.worst_param = name;
        res.worst_index = i;
        res.worst_analytic = analytic[i];
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace ifdd
