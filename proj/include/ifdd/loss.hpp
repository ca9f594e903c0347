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

#include <random>
#include <stdexcept>
#include <string>

#include "ifdd/backbone.hpp"
#include "ifdd/ops.hpp"
#include "ifdd/params.hpp"

namespace ifdd {

enum class ConstrainedDims { tc, thwc, none };

inline ConstrainedDims parse_constrained_dims(const std::string& s) {
  if (s == "tc") return ConstrainedDims::tc;
  if (s == "thwc") return ConstrainedDims::thwc;
  if (s == "none") return ConstrainedDims::none;
  throw std::invalid_argument("unknown loss.constrained_dims '" + s + "'");
}

inline std::string to_string(ConstrainedDims d) {
  switch (d) {
    case ConstrainedDims::tc: return "tc";
    case ConstrainedDims::thwc: return "thwc";
    case ConstrainedDims::none: return "none";
  }
  return "?";
}

struct LossConfig {
  double huber_delta = 1.0;
  ConstrainedDims constrained_dims = ConstrainedDims::tc;
  double lift_weight = 1.0;
};

struct HeadConfig {
  std::size_t hidden = 64;
  std::size_t num_classes = 7;
};

/// Flatten Y_D and map it to N_C logits with a two-layer GELU MLP.
template <class T>
class ClassifierHead {
 public:
  ClassifierHead(std::size_t in_features, const HeadConfig& cfg, ParamStore<T>& store, std::mt19937_64& rng)
      : in_(in_features), cfg_(cfg) {
    if (cfg.num_classes < 2) throw std::invalid_argument("head.num_classes must be at least 2");
    fc1_w_ = store.add("head.fc1.weight", dense_weight<T>(in_features, cfg.hidden, rng));
    fc1_b_ = store.add("head.fc1.bias", Tensor<T>({cfg.hidden}));
    fc2_w_ = store.add("head.fc2.weight", dense_weight<T>(cfg.hidden, cfg.num_classes, rng));
    fc2_b_ = store.add("head.fc2.bias", Tensor<T>({cfg.num_classes}));
  }

  /// Logits κ of length N_C.
  Var<T> classify(const Var<T>& y_d) const {
    if (y_d.numel() != in_) throw ShapeError("head expects " + std::to_string(in_) + " features, got " + to_string(y_d.shape()));
    Var<T> flat = reshape(y_d, {1, in_});
    Var<T> h = gelu(linear(flat, fc1_w_, fc1_b_));
    return reshape(linear(h, fc2_w_, fc2_b_), {cfg_.num_classes});
  }

  std::size_t num_classes() const { return cfg_.num_classes; }

 private:
  std::size_t in_;
  HeadConfig cfg_;
  Var<T> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

/// Cross-entropy of one sample; batches sum these.
template <class T>
Var<T> loss_cls(const Var<T>& logits, std::size_t label) {
  return cross_entropy(logits, label);
}

/// Global-context loss: Y_S (reshaped to (T/2,H,W,C)) must keep the spatial
/// means of the temporally 2×-pooled latent features X, per (t, c).
template <class T>
Var<T> loss_lift(const Var<T>& y_s, const Var<T>& x, ConstrainedDims dims, T delta) {
  if (x.value().rank() != 4 || x.dim(0) % 2 != 0) throw ShapeError("loss_lift expects X as (T,H,W,C) with even T");
  const Shape target{x.dim(0) / 2, x.dim(1), x.dim(2), x.dim(3)};
  if (y_s.numel() != numel(target)) {
    throw ShapeError("loss_lift: Y_S " + to_string(y_s.shape()) + " cannot be reshaped to " + to_string(target));
  }
  if (dims == ConstrainedDims::none) return constant(Tensor<T>::scalar(T(0)));
  Var<T> ys = reshape(y_s, target);
  Var<T> pooled = avg_pool_temporal(x, 2);
  if (dims == ConstrainedDims::tc) return sum(huber(sub(spatial_mean(ys), spatial_mean(pooled)), delta));
  return sum(huber(sub(ys, pooled), delta));
}

}  // namespace ifdd
