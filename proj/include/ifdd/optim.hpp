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

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "ifdd/params.hpp"

namespace ifdd {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
};

/// Moment buffers for one tensor.
template <class T>
struct AdamState {
  Tensor<T> m, v;
  long step = 0;
};

/// One AdamW update of `param` in place. Weight decay is decoupled: it
/// shrinks the parameter directly and never enters the moment estimates.
template <class T>
void adamw_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state, double lr, const AdamWConfig& cfg) {
  if (grad.shape() != param.shape()) {
    throw ShapeError("adamw: gradient " + to_string(grad.shape()) + " vs parameter " + to_string(param.shape()));
  }
  if (state.m.empty()) {
    state.m = Tensor<T>(param.shape());
    state.v = Tensor<T>(param.shape());
  }
  if (state.m.shape() != param.shape()) throw ShapeError("adamw: optimizer state does not match parameter");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double g = grad[i];
    const double m = cfg.beta1 * double(state.m[i]) + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * double(state.v[i]) + (1.0 - cfg.beta2) * g * g;
    state.m[i] = T(m);
    state.v[i] = T(v);
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    param[i] = T(double(param[i]) * decay - lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

/// AdamW over every tensor of a registry.
template <class T>
class AdamW {
 public:
  AdamW(ParamStore<T>& store, AdamWConfig cfg) : store_(store), cfg_(cfg), state_(store.size()) {}

  void step(double lr) {
    const auto& entries = store_.entries();
    if (entries.size() != state_.size()) throw std::logic_error("parameter registry changed under the optimizer");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      Var<T> p = entries[i].second;
      adamw_step(p.mutable_value(), p.grad(), state_[i], lr, cfg_);
    }
  }

  void zero_grad() { store_.zero_grad(); }
  const AdamWConfig& config() const { return cfg_; }

 private:
  ParamStore<T>& store_;
  AdamWConfig cfg_;
  std::vector<AdamState<T>> state_;
};

struct ScheduleConfig {
  std::size_t epochs = 50;
  std::size_t warmup_epochs = 10;
  double base_lr = 1e-4;
  double warmup_lr = 1e-6;
};

/// Constant warm-up rate for the first epochs, then cosine decay from the
/// base rate toward zero.
inline double lr_schedule(std::size_t epoch, const ScheduleConfig& cfg) {
  if (epoch >= cfg.epochs) throw std::out_of_range("lr_schedule: epoch beyond configured total");
  if (epoch < cfg.warmup_epochs) return cfg.warmup_lr;
  const double span = double(cfg.epochs - cfg.warmup_epochs);
  const double progress = double(epoch - cfg.warmup_epochs) / span;
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace ifdd
