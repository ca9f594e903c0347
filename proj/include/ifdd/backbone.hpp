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

// Small convolutional stand-in for the video backbone: a stem that folds
// frame pairs into channels and downsamples space, S conv stages that each
// halve the spatial extent after the first, and pyramid aggregation that
// brings every stage to the coarsest resolution with strided dilated convs
// before a 1×1 fusion.

#include <random>
#include <string>
#include <vector>

#include "ifdd/ops.hpp"
#include "ifdd/params.hpp"

namespace ifdd {

struct BackboneConfig {
  std::size_t stem_stride = 2;  // 4 reproduces the 224 → 56 stem of the full-size setting
  std::size_t temporal_fold = 2;
  std::vector<std::size_t> channels{8, 16, 32};  // one width per stage
  std::size_t dilation = 2;
  std::size_t fuse_channels = 32;

  std::size_t stages() const { return channels.size(); }

  /// Spatial extent of stage j (0-based) for an input extent `in`.
  std::size_t stage_extent(std::size_t in, std::size_t j) const { return in / stem_stride >> j; }
};

struct ClipShape {
  std::size_t frames = 16;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
};

/// Extents of the latent features X produced for a clip.
struct LatentShape {
  std::size_t t = 0, h = 0, w = 0, c = 0;
  std::size_t frame_size() const { return h * w * c; }
};

/// Validates clip extents against the backbone and returns the latent shape.
inline LatentShape latent_shape(const ClipShape& clip, const BackboneConfig& cfg) {
  if (cfg.channels.empty()) throw ShapeError("backbone needs at least one stage");
  if (cfg.stem_stride == 0 || cfg.temporal_fold == 0) throw ShapeError("backbone strides must be positive");
  if (clip.frames < 4 || clip.frames % (2 * cfg.temporal_fold) != 0) {
    throw ShapeError("clip frame count " + std::to_string(clip.frames) + " must be a positive multiple of " +
                     std::to_string(2 * cfg.temporal_fold));
  }
  // The coarsest stage feeds ISSM's 2× spatial pooling, so it must stay even.
  const std::size_t div = cfg.stem_stride << cfg.stages();
  for (std::size_t e : {clip.height, clip.width}) {
    if (e % div != 0) {
      throw ShapeError("clip spatial extent " + std::to_string(e) + " must be divisible by " + std::to_string(div));
    }
  }
  const std::size_t last = cfg.stages() - 1;
  return {clip.frames / cfg.temporal_fold, cfg.stage_extent(clip.height, last), cfg.stage_extent(clip.width, last),
          cfg.fuse_channels};
}

template <class T>
class Backbone {
 public:
  Backbone(const ClipShape& clip, const BackboneConfig& cfg, ParamStore<T>& store, std::mt19937_64& rng)
      : clip_(clip), cfg_(cfg), latent_(latent_shape(clip, cfg)) {
    const std::size_t s = cfg.stages();
    const std::size_t stem_in = clip.channels * cfg.temporal_fold;
    stem_w_ = store.add("backbone.stem.weight", conv_weight<T>(3, stem_in, cfg.channels[0], rng));
    stem_b_ = store.add("backbone.stem.bias", Tensor<T>({cfg.channels[0]}));
    for (std::size_t j = 0; j < s; ++j) {
      const std::size_t cin = j == 0 ? cfg.channels[0] : cfg.channels[j - 1];
      const std::size_t c = cfg.channels[j];
      const std::string p = "backbone.stage" + std::to_string(j);
      Stage st;
      st.wa = store.add(p + ".conv_a.weight", conv_weight<T>(3, cin, c, rng));
      st.ba = store.add(p + ".conv_a.bias", Tensor<T>({c}));
      st.wb = store.add(p + ".conv_b.weight", conv_weight<T>(3, c, c, rng));
      st.bb = store.add(p + ".conv_b.bias", Tensor<T>({c}));
      st.wc = store.add(p + ".compress.weight", conv_weight<T>(3, c, c, rng));
      st.bc = store.add(p + ".compress.bias", Tensor<T>({c}));
      stages_.push_back(st);
    }
    std::size_t concat = 0;
    for (auto c : cfg.channels) concat += c;
    fuse_w_ = store.add("backbone.fuse.weight", conv_weight<T>(1, concat, cfg.fuse_channels, rng));
    fuse_b_ = store.add("backbone.fuse.bias", Tensor<T>({cfg.fuse_channels}));
  }

  const LatentShape& latent() const { return latent_; }
  const BackboneConfig& config() const { return cfg_; }

  /// Multiscale features; every stage shares the folded temporal extent.
  std::vector<Var<T>> embed_clip(const Var<T>& clip) const {
    check_clip(clip);
    Var<T> h = fold_time_into_channels(clip, cfg_.temporal_fold);
    h = gelu(conv2d(h, stem_w_, stem_b_, {cfg_.stem_stride, 1, 1}));
    std::vector<Var<T>> pyramid;
    for (std::size_t j = 0; j < stages_.size(); ++j) {
      const auto& st = stages_[j];
      h = gelu(conv2d(h, st.wa, st.ba, {j == 0 ? 1u : 2u, 1, 1}));
      h = gelu(conv2d(h, st.wb, st.bb, {1, 1, 1}));
      pyramid.push_back(h);
    }
    return pyramid;
  }

  /// Compresses each stage to the coarsest resolution (stride 2^(S−1−j),
  /// dilated 3×3), concatenates on channels and fuses with a 1×1 conv.
  Var<T> pyramid_aggregate(const std::vector<Var<T>>& pyramid) const {
    if (pyramid.size() != stages_.size()) throw ShapeError("pyramid stage count mismatch");
    const std::size_t s = stages_.size();
    std::vector<Var<T>> compressed;
    for (std::size_t j = 0; j < s; ++j) {
      const std::size_t stride = std::size_t{1} << (s - 1 - j);
      const auto& st = stages_[j];
      Var<T> c = conv2d(pyramid[j], st.wc, st.bc, {stride, cfg_.dilation, cfg_.dilation});
      if (c.dim(1) != latent_.h || c.dim(2) != latent_.w) {
        throw ShapeError("stage " + std::to_string(j) + " compresses to " + to_string(c.shape()) +
                         ", not the common target " + std::to_string(latent_.h) + "x" + std::to_string(latent_.w));
      }
      compressed.push_back(c);
    }
    Var<T> cat = concat(compressed, 3);
    return conv2d(cat, fuse_w_, fuse_b_, {1, 1, 0});
  }

  Var<T> forward(const Var<T>& clip) const { return pyramid_aggregate(embed_clip(clip)); }

 private:
  struct Stage {
    Var<T> wa, ba, wb, bb, wc, bc;
  };

  void check_clip(const Var<T>& clip) const {
    const Shape expect{clip_.frames, clip_.height, clip_.width, clip_.channels};
    if (clip.shape() != expect) {
      throw ShapeError("clip shape " + to_string(clip.shape()) + " does not match configured " + to_string(expect));
    }
  }

  ClipShape clip_;
  BackboneConfig cfg_;
  LatentShape latent_;
  Var<T> stem_w_, stem_b_;
  std::vector<Stage> stages_;
  Var<T> fuse_w_, fuse_b_;
};

}  // namespace ifdd
