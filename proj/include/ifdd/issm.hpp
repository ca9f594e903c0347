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

// Inter-frame static/dynamic splitting.
//
// Latent features X (T,H,W,C) are embedded into per-frame temporal tokens Z
// (T, d_T). The scaled token correlation Z·Zᵀ/√d_T is turned into two
// row-stochastic maps, softmax(+corr) and softmax(−corr); each is flattened
// and projected to T/2 tanh-bounded offset scales. Offsets displace the
// even/odd (or midpoint) base indices by at most L frames, and X is sampled
// at the resulting fractional indices by linear interpolation.

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

#include "ifdd/backbone.hpp"
#include "ifdd/ops.hpp"
#include "ifdd/params.hpp"

namespace ifdd {

enum class SplitVariant {
  issm,             // temporal correlation → interpolated fractional indices
  entire_features,  // global token attends over all positions → indices
  weighting,        // temporal correlation → soft T×T/2 mixing matrices
  even_odd,         // fixed parity sampling
};

enum class InitMode { even_odd, midpoint };

inline SplitVariant parse_split_variant(const std::string& s);
inline std::string to_string(SplitVariant v);
inline InitMode parse_init_mode(const std::string& s);
inline std::string to_string(InitMode m);

struct IssmConfig {
  std::size_t d_t = 16;
  std::size_t dc = 1;
  std::string range_l = "T/2";  // "T/4", "T/2" or a positive number
  InitMode init_mode = InitMode::even_odd;
  SplitVariant variant = SplitVariant::issm;
  double ln_eps = 1e-5;
};

/// Allowable offset range L for a temporal extent T.
inline double resolve_range(const std::string& spec, std::size_t t) {
  if (spec == "T/2") return double(t) / 2.0;
  if (spec == "T/4") return double(t) / 4.0;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(spec, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != spec.size() || !(v > 0)) throw std::invalid_argument("issm.range_l must be T/4, T/2 or a positive number, got '" + spec + "'");
  return v;
}

template <class T>
struct OffsetScales {
  Var<T> a_s, a_d;  // (T/2) each, inside (−1, 1)
};

template <class T>
struct SplitIndices {
  Var<T> i_s, i_d;  // (T/2) each, inside [0, T−1]
  double range_l = 0;
};

template <class T>
struct SplitPair {
  Var<T> x_s, x_d;  // (T/2, H, W, C) each
};

/// Base index for slot i of the static (dynamic = false) or dynamic group.
inline double base_index(InitMode mode, std::size_t t, std::size_t i, bool dynamic) {
  if (mode == InitMode::midpoint) return double(t) / 2.0;
  return double(2 * i + (dynamic ? 1 : 0));
}

/// I = clamp(base + A·L, 0, T−1) for both groups.
template <class T>
SplitIndices<T> generate_indices(const OffsetScales<T>& a, double range_l, std::size_t t, InitMode mode) {
  if (!(range_l > 0)) throw std::invalid_argument("allowable range L must be positive");
  const std::size_t half = t / 2;
  auto make = [&](const Var<T>& scales, bool dynamic) {
    if (scales.numel() != half) throw ShapeError("offset scale length must be T/2");
    Tensor<T> base({half});
    for (std::size_t i = 0; i < half; ++i) base[i] = T(base_index(mode, t, i, dynamic));
    Var<T> raw = add(scale(reshape(scales, {half}), T(range_l)), constant(std::move(base)));
    return clamp(raw, T(0), T(t - 1));
  };
  return {make(a.a_s, false), make(a.a_d, true), range_l};
}

template <class T>
SplitPair<T> split_interpolate(const Var<T>& x, const SplitIndices<T>& idx) {
  return {interp_gather(x, idx.i_s), interp_gather(x, idx.i_d)};
}

/// Applies a (T, T') mixing matrix along the temporal axis:
/// out[j] = Σ_t m[t, j] · x[t].
template <class T>
Var<T> temporal_mix(const Var<T>& x, const Var<T>& m) {
  const std::size_t t = x.dim(0);
  if (m.value().rank() != 2 || m.dim(0) != t) {
    throw ShapeError("temporal_mix: matrix " + to_string(m.shape()) + " vs features " + to_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[0] = m.dim(1);
  Var<T> flat = reshape(x, {t, x.numel() / t});
  return reshape(matmul(transpose(m), flat), out_shape);
}

template <class T>
class Issm {
 public:
  Issm(const LatentShape& latent, const IssmConfig& cfg, ParamStore<T>& store, std::mt19937_64& rng)
      : latent_(latent), cfg_(cfg) {
    if (latent.t % 2 != 0) throw ShapeError("temporal extent T must be even to split into two halves");
    if (latent.h % 2 != 0 || latent.w % 2 != 0) throw ShapeError("latent H and W must be even for 2× pooling");
    if (cfg.dc == 0 || latent.c % cfg.dc != 0) throw ShapeError("issm.dc must divide the channel count");
    range_l_ = resolve_range(cfg.range_l, latent.t);
    const std::size_t t = latent.t, half = t / 2, c = latent.c, cz = c / cfg.dc;
    const std::size_t token_in = (latent.h / 2) * (latent.w / 2) * cz;

    if (cfg.variant == SplitVariant::issm || cfg.variant == SplitVariant::weighting) {
      conv_w_ = store.add("issm.conv.weight", conv_weight<T>(3, c, cz, rng));
      conv_b_ = store.add("issm.conv.bias", Tensor<T>({cz}));
      w_t_ = store.add("issm.w_t", dense_weight<T>(token_in, cfg.d_t, rng));
      b_t_ = store.add("issm.b_t", Tensor<T>({t, cfg.d_t}));
      ln_g_ = store.add("issm.ln.gamma", Tensor<T>({cfg.d_t}, T(1)));
      ln_b_ = store.add("issm.ln.beta", Tensor<T>({cfg.d_t}));
    }
    if (cfg.variant == SplitVariant::issm) {
      w_s_ = store.add("issm.w_s", dense_weight<T>(t * t, half, rng));
      b_s_ = store.add("issm.b_s", Tensor<T>({half}));
      w_d_ = store.add("issm.w_d", dense_weight<T>(t * t, half, rng));
      b_d_ = store.add("issm.b_d", Tensor<T>({half}));
    } else if (cfg.variant == SplitVariant::weighting) {
      w_s_ = store.add("issm.mix_s.weight", dense_weight<T>(t * t, t * half, rng));
      b_s_ = store.add("issm.mix_s.bias", Tensor<T>({t * half}));
      w_d_ = store.add("issm.mix_d.weight", dense_weight<T>(t * t, t * half, rng));
      b_d_ = store.add("issm.mix_d.bias", Tensor<T>({t * half}));
    } else if (cfg.variant == SplitVariant::entire_features) {
      g_ = store.add("issm.global_token", xavier_uniform<T>({1, c}, c, c, rng));
      wq_ = store.add("issm.attn.w_q", dense_weight<T>(c, c, rng));
      wk_ = store.add("issm.attn.w_k", dense_weight<T>(c, c, rng));
      wv_ = store.add("issm.attn.w_v", dense_weight<T>(c, c, rng));
      m1_w_ = store.add("issm.mlp.fc1.weight", dense_weight<T>(c, c, rng));
      m1_b_ = store.add("issm.mlp.fc1.bias", Tensor<T>({c}));
      m2_w_ = store.add("issm.mlp.fc2.weight", dense_weight<T>(c, t, rng));
      m2_b_ = store.add("issm.mlp.fc2.bias", Tensor<T>({t}));
    }
  }

  const IssmConfig& config() const { return cfg_; }
  double range_l() const { return range_l_; }

  /// Z = LN(Vec(conv(pool₂(X)))·W_T + b_T), shape (T, d_T).
  Var<T> embed_temporal_tokens(const Var<T>& x) const {
    require_tokens();
    Var<T> h = conv2d(avg_pool_spatial(x, 2), conv_w_, conv_b_, {1, 1, 1});
    Var<T> flat = reshape(h, {latent_.t, h.numel() / latent_.t});
    return layer_norm(add(matmul(flat, w_t_), b_t_), ln_g_, ln_b_, T(cfg_.ln_eps));
  }

  /// softmax(±Z·Zᵀ/√d_T) row-wise, flattened to (1, T²) each.
  std::pair<Var<T>, Var<T>> correlation_maps(const Var<T>& z) const {
    const std::size_t t = z.dim(0);
    Var<T> corr = scale(matmul(z, transpose(z)), T(1) / std::sqrt(T(z.dim(1))));
    Var<T> pos = reshape(softmax(corr, 1), {1, t * t});
    Var<T> neg = reshape(softmax(scale(corr, T(-1)), 1), {1, t * t});
    return {pos, neg};
  }

  OffsetScales<T> compute_offset_scales(const Var<T>& z) const {
    if (cfg_.variant != SplitVariant::issm) throw std::logic_error("offset scales are defined for the issm variant");
    auto [pos, neg] = correlation_maps(z);
    const std::size_t half = latent_.t / 2;
    return {reshape(tanh(linear(pos, w_s_, b_s_)), {half}), reshape(tanh(linear(neg, w_d_, b_d_)), {half})};
  }

  /// Index head of the entire-features variant: a learnable global token is
  /// prepended to the T·H·W position tokens and attends over all of them with
  /// single-head scaled dot-product attention. Only the global token's output
  /// is consumed, so only its query row is evaluated.
  OffsetScales<T> entire_feature_scales(const Var<T>& x) const {
    const std::size_t c = latent_.c, half = latent_.t / 2;
    Var<T> tokens = concat<T>({g_, reshape(x, {x.numel() / c, c})}, 0);
    Var<T> q = scale(matmul(g_, wq_), T(1) / std::sqrt(T(c)));
    Var<T> k = matmul(tokens, wk_);
    Var<T> v = matmul(tokens, wv_);
    Var<T> attn = softmax(matmul(q, transpose(k)), 1);
    Var<T> pooled = matmul(attn, v);
    Var<T> h = gelu(linear(pooled, m1_w_, m1_b_));
    Var<T> out = tanh(linear(h, m2_w_, m2_b_));
    Var<T> flat = reshape(out, {2 * half});
    return {reshape(slice_rows(flat, 0, half), {half}), reshape(slice_rows(flat, half, half), {half})};
  }

  /// Soft temporal mixing of the weighting variant; each column of the
  /// (T, T/2) matrices is a softmax over source frames.
  std::pair<Var<T>, Var<T>> mixing_matrices(const Var<T>& z) const {
    auto [pos, neg] = correlation_maps(z);
    const std::size_t t = latent_.t, half = t / 2;
    Var<T> ms = softmax(reshape(linear(pos, w_s_, b_s_), {t, half}), 0);
    Var<T> md = softmax(reshape(linear(neg, w_d_, b_d_), {t, half}), 0);
    return {ms, md};
  }

  struct Output {
    SplitPair<T> split;
    std::optional<SplitIndices<T>> indices;  // absent for the weighting variant
  };

  Output forward(const Var<T>& x) const {
    const std::size_t t = latent_.t, half = t / 2;
    switch (cfg_.variant) {
      case SplitVariant::issm: {
        auto idx = generate_indices(compute_offset_scales(embed_temporal_tokens(x)), range_l_, t, cfg_.init_mode);
        return {split_interpolate(x, idx), idx};
      }
      case SplitVariant::entire_features: {
        auto idx = generate_indices(entire_feature_scales(x), range_l_, t, cfg_.init_mode);
        return {split_interpolate(x, idx), idx};
      }
      case SplitVariant::weighting: {
        auto [ms, md] = mixing_matrices(embed_temporal_tokens(x));
        return {{temporal_mix(x, ms), temporal_mix(x, md)}, std::nullopt};
      }
      case SplitVariant::even_odd: {
        OffsetScales<T> zero{constant(Tensor<T>({half})), constant(Tensor<T>({half}))};
        auto idx = generate_indices(zero, range_l_, t, InitMode::even_odd);
        return {split_interpolate(x, idx), idx};
      }
    }
    throw std::logic_error("unhandled split variant");
  }

 private:
  void require_tokens() const {
    if (!conv_w_.defined()) throw std::logic_error("temporal tokens are not used by this split variant");
  }

  LatentShape latent_;
  IssmConfig cfg_;
  double range_l_ = 0;
  Var<T> conv_w_, conv_b_, w_t_, b_t_, ln_g_, ln_b_;
  Var<T> w_s_, b_s_, w_d_, b_d_;
  Var<T> g_, wq_, wk_, wv_, m1_w_, m1_b_, m2_w_, m2_b_;
};

inline SplitVariant parse_split_variant(const std::string& s) {
  if (s == "issm") return SplitVariant::issm;
  if (s == "entire_features") return SplitVariant::entire_features;
  if (s == "weighting") return SplitVariant::weighting;
  if (s == "even_odd") return SplitVariant::even_odd;
  throw std::invalid_argument("unknown issm.variant '" + s + "'");
}

inline std::string to_string(SplitVariant v) {
  switch (v) {
    case SplitVariant::issm: return "issm";
    case SplitVariant::entire_features: return "entire_features";
    case SplitVariant::weighting: return "weighting";
    case SplitVariant::even_odd: return "even_odd";
  }
  return "?";
}

inline InitMode parse_init_mode(const std::string& s) {
  if (s == "even_odd") return InitMode::even_odd;
  if (s == "midpoint") return InitMode::midpoint;
  throw std::invalid_argument("unknown issm.init_mode '" + s + "'");
}

inline std::string to_string(InitMode m) { return m == InitMode::midpoint ? "midpoint" : "even_odd"; }

}  // namespace ifdd
