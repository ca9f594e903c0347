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

#include <cstdint>
#include <optional>
#include <random>

#include "ifdd/backbone.hpp"
#include "ifdd/issm.hpp"
#include "ifdd/ladm.hpp"
#include "ifdd/loss.hpp"
#include "ifdd/params.hpp"

namespace ifdd {

struct ModelConfig {
  ClipShape clip;
  BackboneConfig backbone;
  IssmConfig issm;
  LadmConfig ladm;
  LossConfig loss;
  HeadConfig head;
};

template <class T>
struct ForwardTrace {
  Var<T> x;                                // latent features (T,H,W,C)
  std::optional<SplitIndices<T>> indices;  // absent for mixing-based splits
  SplitPair<T> split;
  LiftedPair<T> lifted;
  Var<T> logits;
};

template <class T>
struct LossParts {
  Var<T> cls, lift, total;
};

/// Backbone → split → lifting → head, with the decoupling loss.
template <class T>
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg), rng_(init_seed), backbone_(cfg.clip, cfg.backbone, store_, rng_) {
    const auto& lat = backbone_.latent();
    issm_.emplace(lat, cfg.issm, store_, rng_);
    if (cfg.ladm.enabled) ladm_.emplace(lat, cfg.ladm, store_, rng_);
    head_.emplace(lat.t / 2 * lat.frame_size(), cfg.head, store_, rng_);
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const LatentShape& latent() const { return backbone_.latent(); }
  const Backbone<T>& backbone() const { return backbone_; }
  const Issm<T>& issm() const { return *issm_; }
  const Ladm<T>* ladm() const { return ladm_ ? &*ladm_ : nullptr; }
  const ClassifierHead<T>& head() const { return *head_; }

  ForwardTrace<T> forward(const Tensor<T>& clip) const { return forward(constant(clip)); }

  ForwardTrace<T> forward(const Var<T>& clip) const {
    ForwardTrace<T> tr;
    tr.x = backbone_.forward(clip);
    auto split = issm_->forward(tr.x);
    tr.split = split.split;
    tr.indices = split.indices;
    if (ladm_) {
      tr.lifted = ladm_->lift(tr.split);
    } else {
      const std::size_t c = latent().c;
      tr.lifted = {reshape(tr.split.x_s, {tr.split.x_s.numel() / c, c}),
                   reshape(tr.split.x_d, {tr.split.x_d.numel() / c, c})};
    }
    tr.logits = head_->classify(tr.lifted.y_d);
    return tr;
  }

  /// L = L_CLS + w·L_Lift for one sample (w = 1 unless overridden).
  LossParts<T> losses(const ForwardTrace<T>& tr, std::size_t label) const {
    LossParts<T> p;
    p.cls = loss_cls(tr.logits, label);
    p.lift = loss_lift(tr.lifted.y_s, tr.x, cfg_.loss.constrained_dims, T(cfg_.loss.huber_delta));
    Var<T> lift = cfg_.loss.lift_weight == 1.0 ? p.lift : scale(p.lift, T(cfg_.loss.lift_weight));
    p.total = add(p.cls, lift);
    return p;
  }

 private:
  ModelConfig cfg_;
  ParamStore<T> store_;
  std::mt19937_64 rng_;
  Backbone<T> backbone_;
  std::optional<Issm<T>> issm_;
  std::optional<Ladm<T>> ladm_;
  std::optional<ClassifierHead<T>> head_;
};

}  // namespace ifdd
