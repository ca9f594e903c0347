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

// Lifting-based aggregation and disentanglement.
//
//   Y_S = Vec X_S + U(X_D | X_S)     (update: aggregate context into Y_S)
//   Y_D = Vec X_D − P(Y_S | X_D)     (predict: strip context from X_D)
//
// U and P are single-head cross-attention blocks followed by a two-layer
// GELU MLP, with a LayerNorm on either the attention operands (default) or
// the MLP output. The MLP's last layer starts at zero so the lifting begins
// as an exact pass-through.

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "ifdd/issm.hpp"
#include "ifdd/ops.hpp"
#include "ifdd/params.hpp"

namespace ifdd {

enum class LiftOrder { updater_first, predictor_first };

/// Where each lifting block applies its LayerNorm: on the block output
/// (after the MLP) or on the two attention operands.
enum class NormPosition { output, input };

inline LiftOrder parse_lift_order(const std::string& s) {
  if (s == "updater_first") return LiftOrder::updater_first;
  if (s == "predictor_first") return LiftOrder::predictor_first;
  throw std::invalid_argument("unknown ladm.order '" + s + "'");
}

inline std::string to_string(LiftOrder o) {
  return o == LiftOrder::updater_first ? "updater_first" : "predictor_first";
}

inline NormPosition parse_norm_position(const std::string& s) {
  if (s == "output") return NormPosition::output;
  if (s == "input") return NormPosition::input;
  throw std::invalid_argument("unknown ladm.norm '" + s + "'");
}

inline std::string to_string(NormPosition n) { return n == NormPosition::output ? "output" : "input"; }

struct LadmConfig {
  bool enabled = true;
  LiftOrder order = LiftOrder::updater_first;
  std::size_t mlp_hidden = 0;  // 0 means "same as C"
  double ln_eps = 1e-5;
  NormPosition norm = NormPosition::input;
};

template <class T>
struct LiftedPair {
  Var<T> y_s, y_d;  // (N, C) each, N = (T/2)·H·W
};

/// One cross-attention lifting operator: queries from `query_src`, keys and
/// values from `context`. Q is scaled by 1/√C at projection.
template <class T>
class CrossAttentionLift {
 public:
  CrossAttentionLift(const std::string& prefix, std::size_t c, std::size_t hidden, NormPosition norm,
                     ParamStore<T>& store, std::mt19937_64& rng)
      : c_(c), norm_(norm) {
    wq_ = store.add(prefix + ".w_q", dense_weight<T>(c, c, rng));
    wk_ = store.add(prefix + ".w_k", dense_weight<T>(c, c, rng));
    wv_ = store.add(prefix + ".w_v", dense_weight<T>(c, c, rng));
    fc1_w_ = store.add(prefix + ".mlp.fc1.weight", dense_weight<T>(c, hidden, rng));
    fc1_b_ = store.add(prefix + ".mlp.fc1.bias", Tensor<T>({hidden}));
    fc2_w_ = store.add(prefix + ".mlp.fc2.weight", Tensor<T>({hidden, c}));
    fc2_b_ = store.add(prefix + ".mlp.fc2.bias", Tensor<T>({c}));
    if (norm == NormPosition::output) {
      ln_g_ = store.add(prefix + ".ln.gamma", Tensor<T>({c}, T(1)));
      ln_b_ = store.add(prefix + ".ln.beta", Tensor<T>({c}));
    } else {
      ln_g_ = store.add(prefix + ".ln_q.gamma", Tensor<T>({c}, T(1)));
      ln_b_ = store.add(prefix + ".ln_q.beta", Tensor<T>({c}));
      ln_kv_g_ = store.add(prefix + ".ln_kv.gamma", Tensor<T>({c}, T(1)));
      ln_kv_b_ = store.add(prefix + ".ln_kv.beta", Tensor<T>({c}));
    }
  }

  struct Trace {
    Var<T> attention;  // (N_q, N_kv), rows sum to 1
    Var<T> output;     // (N_q, C)
  };

  Trace run(const Var<T>& query_src, const Var<T>& context, T ln_eps) const {
    if (query_src.value().rank() != 2 || context.value().rank() != 2 || query_src.dim(1) != c_ || context.dim(1) != c_) {
      throw ShapeError("cross-attention operands " + to_string(query_src.shape()) + " and " + to_string(context.shape()) +
                       " must both have " + std::to_string(c_) + " columns");
    }
    Var<T> qs = query_src, kv = context;
    if (norm_ == NormPosition::input) {
      qs = layer_norm(query_src, ln_g_, ln_b_, ln_eps);
      kv = layer_norm(context, ln_kv_g_, ln_kv_b_, ln_eps);
    }
    Var<T> q = scale(matmul(qs, wq_), T(1) / std::sqrt(T(c_)));
    Var<T> k = matmul(kv, wk_);
    Var<T> v = matmul(kv, wv_);
    Var<T> attn = softmax(matmul(q, transpose(k)), 1);
    Var<T> h = gelu(linear(matmul(attn, v), fc1_w_, fc1_b_));
    Var<T> out = linear(h, fc2_w_, fc2_b_);
    if (norm_ == NormPosition::output) out = layer_norm(out, ln_g_, ln_b_, ln_eps);
    return {attn, out};
  }

  Var<T> operator()(const Var<T>& query_src, const Var<T>& context, T ln_eps) const {
    return run(query_src, context, ln_eps).output;
  }

 private:
  std::size_t c_;
  NormPosition norm_;
  Var<T> wq_, wk_, wv_, fc1_w_, fc1_b_, fc2_w_, fc2_b_, ln_g_, ln_b_, ln_kv_g_, ln_kv_b_;
};

template <class T>
class Ladm {
 public:
  Ladm(const LatentShape& latent, const LadmConfig& cfg, ParamStore<T>& store, std::mt19937_64& rng)
      : latent_(latent),
        cfg_(cfg),
        updater_("ladm.updater", latent.c, cfg.mlp_hidden ? cfg.mlp_hidden : latent.c, cfg.norm, store, rng),
        predictor_("ladm.predictor", latent.c, cfg.mlp_hidden ? cfg.mlp_hidden : latent.c, cfg.norm, store, rng) {}

  const LadmConfig& config() const { return cfg_; }
  std::size_t tokens() const { return latent_.t / 2 * latent_.h * latent_.w; }

  /// Vec over (T/2, H, W): (T/2, H, W, C) → (N, C).
  Var<T> vectorize(const Var<T>& x) const { return reshape(x, {x.numel() / latent_.c, latent_.c}); }

  /// U(X_D | X_S): queries from X_S, keys/values from X_D.
  Var<T> updater(const Var<T>& x_d, const Var<T>& x_s) const { return updater_(x_s, x_d, T(cfg_.ln_eps)); }

  /// P(Y_S | X_D): queries from X_D, keys/values from Y_S.
  Var<T> predictor(const Var<T>& y_s, const Var<T>& x_d) const { return predictor_(x_d, y_s, T(cfg_.ln_eps)); }

  const CrossAttentionLift<T>& updater_block() const { return updater_; }
  const CrossAttentionLift<T>& predictor_block() const { return predictor_; }

  LiftedPair<T> lift(const SplitPair<T>& split) const {
    Var<T> xs = vectorize(split.x_s);
    Var<T> xd = vectorize(split.x_d);
    if (cfg_.order == LiftOrder::updater_first) {
      Var<T> y_s = add(xs, updater(xd, xs));
      Var<T> y_d = sub(xd, predictor(y_s, xd));
      return {y_s, y_d};
    }
    // Reversed order: predict from the unrefined X_S, then update from that Y_D.
    Var<T> y_d = sub(xd, predictor(xs, xd));
    Var<T> y_s = add(xs, updater(y_d, xs));
    return {y_s, y_d};
  }

 private:
  LatentShape latent_;
  LadmConfig cfg_;
  CrossAttentionLift<T> updater_;
  CrossAttentionLift<T> predictor_;
};

}  // namespace ifdd
