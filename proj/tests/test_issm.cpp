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

#include <bit>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ifdd/gradcheck.hpp"
#include "ifdd/issm.hpp"
#include "test_util.hpp"

namespace ifdd {
namespace {

using testing::probe_sum;
using testing::random_tensor;

const LatentShape kToy{8, 4, 4, 32};

struct Fixture {
  ParamStore<double> store;
  std::mt19937_64 rng;
  std::optional<Issm<double>> issm;

  explicit Fixture(IssmConfig cfg = {}, LatentShape lat = kToy, std::uint64_t seed = 31) : rng(seed) {
    issm.emplace(lat, cfg, store, rng);
  }

  void zero(std::initializer_list<const char*> names) {
    for (const char* n : names) store.get(n).mutable_value().fill(0.0);
  }
};

Var<double> random_x(std::uint64_t seed, LatentShape lat = kToy, double amp = 1.0) {
  std::mt19937_64 r(seed);
  return constant(random_tensor({lat.t, lat.h, lat.w, lat.c}, r, -amp, amp));
}

Var<double> vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return constant(Tensor<double>({n}, std::move(v)));
}

bool frame_equal(const Tensor<double>& a, std::size_t i, const Tensor<double>& x, std::size_t t) {
  const std::size_t frame = x.numel() / x.dim(0);
  for (std::size_t k = 0; k < frame; ++k)
    if (std::bit_cast<std::uint64_t>(a[i * frame + k]) != std::bit_cast<std::uint64_t>(x[t * frame + k])) return false;
  return true;
}

TEST(Issm, ZeroOffsetHeadsReproduceEvenOddSampling) {
  Fixture f;
  f.zero({"issm.w_s", "issm.b_s", "issm.w_d", "issm.b_d"});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = random_x(seed);
    auto out = f.issm->forward(x);
    ASSERT_TRUE(out.indices.has_value());
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(out.indices->i_s.value()[i], double(2 * i));
      EXPECT_EQ(out.indices->i_d.value()[i], double(2 * i + 1));
      EXPECT_TRUE(frame_equal(out.split.x_s.value(), i, x.value(), 2 * i));
      EXPECT_TRUE(frame_equal(out.split.x_d.value(), i, x.value(), 2 * i + 1));
    }
  }
}

TEST(Issm, TemporalTokensShape) {
  Fixture f;
  auto z = f.issm->embed_temporal_tokens(random_x(1));
  EXPECT_EQ(z.shape(), (Shape{8, 16}));
}

TEST(Issm, ZeroTokenProjectionGivesZeroTokens) {
  Fixture f;
  f.zero({"issm.w_t", "issm.b_t"});
  auto z = f.issm->embed_temporal_tokens(random_x(2));
  for (double v : z.value().data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Issm, TokenProjectionGradientMatchesFiniteDifferences) {
  Fixture f;
  auto x = random_x(3);
  std::vector<std::pair<std::string, Var<double>>> params{{"issm.w_t", f.store.get("issm.w_t")},
                                                          {"issm.conv.weight", f.store.get("issm.conv.weight")}};
  GradCheckOptions opt;
  opt.max_entries_per_param = 40;
  const auto r = finite_diff_check([&] { return probe_sum(f.issm->embed_temporal_tokens(x)); }, params, opt);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param;
}

TEST(Issm, ZeroOffsetWeightsGiveZeroScales) {
  Fixture f;
  f.zero({"issm.w_s", "issm.b_s", "issm.w_d", "issm.b_d"});
  auto a = f.issm->compute_offset_scales(f.issm->embed_temporal_tokens(random_x(4)));
  for (double v : a.a_s.value().data()) EXPECT_EQ(v, 0.0);
  for (double v : a.a_d.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Issm, ConstantTokenRowsGiveUniformCorrelation) {
  Fixture f;
  Tensor<double> z({4, 16}, 0.3);
  auto [pos, neg] = f.issm->correlation_maps(constant(z));
  ASSERT_EQ(pos.numel(), 16u);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_NEAR(pos.value()[i], 0.25, 1e-15);
    EXPECT_NEAR(neg.value()[i], 0.25, 1e-15);
  }
}

TEST(Issm, CorrelationMatrixIsSymmetric) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto z = constant(random_tensor({8, 16}, rng, -3, 3));
    auto corr = scale(matmul(z, transpose(z)), 1.0 / std::sqrt(16.0));
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) ASSERT_NEAR(corr.value().at(i, j), corr.value().at(j, i), 1e-12);
  }
}

TEST(Issm, GenerateIndicesExamples) {
  auto zero = vec({0, 0, 0, 0});
  auto idx = generate_indices(OffsetScales<double>{zero, zero}, 4.0, 8, InitMode::even_odd);
  EXPECT_EQ(idx.i_s.value().storage(), (std::vector<double>{0, 2, 4, 6}));
  EXPECT_EQ(idx.i_d.value().storage(), (std::vector<double>{1, 3, 5, 7}));

  idx = generate_indices(OffsetScales<double>{vec({0, 0.5, 0, 0}), vec({0, 0, 0, std::nextafter(1.0, 0.0)})}, 4.0, 8,
                         InitMode::even_odd);
  EXPECT_EQ(idx.i_s.value()[1], 4.0);
  EXPECT_EQ(idx.i_d.value()[3], 7.0);

  idx = generate_indices(OffsetScales<double>{vec({-0.5, 0.25, 0, 0}), zero}, 4.0, 8, InitMode::midpoint);
  EXPECT_EQ(idx.i_s.value().storage(), (std::vector<double>{2, 5, 4, 4}));
  EXPECT_EQ(idx.i_d.value().storage(), (std::vector<double>{4, 4, 4, 4}));

  EXPECT_THROW(generate_indices(OffsetScales<double>{zero, zero}, 0.0, 8, InitMode::even_odd), std::invalid_argument);
  EXPECT_THROW(generate_indices(OffsetScales<double>{vec({0, 0}), zero}, 4.0, 8, InitMode::even_odd), ShapeError);
}

TEST(Issm, ClampedIndicesReceiveNoGradient) {
  auto as = parameter(Tensor<double>({4}, std::vector<double>{-0.9, 0.1, 0.1, 0.9}));
  auto ad = parameter(Tensor<double>({4}, 0.0));
  auto idx = generate_indices(OffsetScales<double>{as, ad}, 4.0, 8, InitMode::even_odd);
  EXPECT_EQ(idx.i_s.value()[0], 0.0);
  EXPECT_EQ(idx.i_s.value()[3], 7.0);
  backward(sum(idx.i_s));
  EXPECT_EQ(as.grad()[0], 0.0);
  EXPECT_EQ(as.grad()[1], 4.0);
  EXPECT_EQ(as.grad()[2], 4.0);
  EXPECT_EQ(as.grad()[3], 0.0);
}

TEST(Issm, FractionalSplitInterpolates) {
  auto x = random_x(6);
  auto idx = SplitIndices<double>{vec({1.25, 2, 4, 6}), vec({1, 3, 5, 7}), 4.0};
  auto out = split_interpolate(x, idx);
  const std::size_t frame = kToy.frame_size();
  for (std::size_t k = 0; k < frame; ++k)
    EXPECT_NEAR(out.x_s.value()[k], 0.25 * x.value()[2 * frame + k] + 0.75 * x.value()[frame + k], 1e-15);
}

TEST(Issm, IndexGradientMatchesFrameDifferenceOverRandomIndices) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 6.999);
  for (int trial = 0; trial < 100; ++trial) {
    auto x = constant(random_tensor({8, 2, 2, 3}, rng));
    Tensor<double> init({4});
    for (double& v : init.data()) {
      v = u(rng);
      if (v - std::floor(v) < 1e-3) v += 0.01;
    }
    std::vector<std::pair<std::string, Var<double>>> params{{"i_s", parameter(init)}};
    Var<double> leaf = params[0].second;
    const auto r = finite_diff_check([&] { return sum(interp_gather(x, leaf)); }, params);
    ASSERT_LT(r.max_rel_error, 1e-4) << "trial " << trial;
    for (std::size_t i = 0; i < 4; ++i) {
      const auto lo = std::size_t(std::floor(init[i]));
      double expect = 0;
      for (std::size_t k = 0; k < 12; ++k) expect += x.value()[(lo + 1) * 12 + k] - x.value()[lo * 12 + k];
      ASSERT_NEAR(leaf.grad()[i], expect, 1e-12);
    }
  }
}

TEST(Issm, OffsetWeightsReceiveGradientThroughIndices) {
  Fixture f;
  auto x = random_x(8);
  auto loss = [&] {
    auto out = f.issm->forward(x);
    return add(probe_sum(out.split.x_s, 1), probe_sum(out.split.x_d, 2));
  };
  backward(loss());
  for (const char* name : {"issm.w_s", "issm.w_d"}) {
    double mag = 0;
    for (double g : f.store.get(name).grad().data()) mag += std::abs(g);
    EXPECT_GT(mag, 0.0) << name;
  }
  f.store.zero_grad();
  GradCheckOptions opt;
  opt.max_entries_per_param = 24;
  const auto r = finite_diff_check(loss, f.store.entries(), opt);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

TEST(Issm, IndexAndScaleBoundsOverRandomConfigurations) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> amp(0.01, 20.0);
  const char* ranges[] = {"T/2", "T/4", "3.5"};
  for (int trial = 0; trial < 120; ++trial) {
    IssmConfig cfg;
    cfg.range_l = ranges[trial % 3];
    cfg.init_mode = trial % 5 == 0 ? InitMode::midpoint : InitMode::even_odd;
    const LatentShape lat{std::size_t(2 + 2 * (trial % 6)), 2, 4, 4};
    Fixture f(cfg, lat, 1000 + trial);
    // Large random offset heads push the tanh towards saturation.
    for (const char* n : {"issm.w_s", "issm.w_d"})
      for (double& v : f.store.get(n).mutable_value().data()) v *= amp(rng);
    auto x = random_x(rng(), lat, amp(rng));
    auto scales = f.issm->compute_offset_scales(f.issm->embed_temporal_tokens(x));
    for (const auto* a : {&scales.a_s, &scales.a_d})
      for (double v : a->value().data()) {
        ASSERT_GT(v, -1.0);
        ASSERT_LT(v, 1.0);
      }
    auto out = f.issm->forward(x);
    for (const auto* idx : {&out.indices->i_s, &out.indices->i_d})
      for (double v : idx->value().data()) {
        ASSERT_GE(v, 0.0) << "trial " << trial;
        ASSERT_LE(v, double(lat.t - 1)) << "trial " << trial;
      }
  }
}

TEST(Issm, EntireFeaturesVariant) {
  IssmConfig cfg;
  cfg.variant = SplitVariant::entire_features;
  Fixture f(cfg);
  EXPECT_EQ(1 + kToy.t * kToy.h * kToy.w, 129u);
  EXPECT_EQ(f.store.get("issm.global_token").shape(), (Shape{1, 32}));
  EXPECT_FALSE(f.store.contains("issm.w_t"));

  // Perturbing the last position token moves the indices, so the global
  // token attends over every position.
  auto x = random_x(10);
  auto a = f.issm->entire_feature_scales(x);
  Tensor<double> moved = x.value();
  for (std::size_t k = moved.numel() - 32; k < moved.numel(); ++k) moved[k] += 1.0;
  auto b = f.issm->entire_feature_scales(constant(moved));
  EXPECT_NE(a.a_s.value(), b.a_s.value());

  f.zero({"issm.mlp.fc2.weight", "issm.mlp.fc2.bias"});
  auto out = f.issm->forward(x);
  EXPECT_EQ(out.indices->i_s.value().storage(), (std::vector<double>{0, 2, 4, 6}));
  EXPECT_EQ(out.indices->i_d.value().storage(), (std::vector<double>{1, 3, 5, 7}));
}

TEST(Issm, TemporalMixSelectorAndUniform) {
  auto x = random_x(11);
  Tensor<double> sel({8, 4});
  for (std::size_t j = 0; j < 4; ++j) sel.at(2 * j, j) = 1.0;
  auto even = temporal_mix(x, constant(sel));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_TRUE(frame_equal(even.value(), j, x.value(), 2 * j));

  auto mean = temporal_mix(x, constant(Tensor<double>({8, 4}, 1.0 / 8)));
  const std::size_t frame = kToy.frame_size();
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t k = 0; k < frame; ++k) {
      double m = 0;
      for (std::size_t t = 0; t < 8; ++t) m += x.value()[t * frame + k];
      EXPECT_NEAR(mean.value()[j * frame + k], m / 8, 1e-14);
    }
}

TEST(Issm, TemporalMixMatchesNaiveLoop) {
  std::mt19937_64 rng(12);
  auto x = random_x(12);
  auto m = random_tensor({8, 4}, rng);
  auto y = temporal_mix(x, constant(m));
  const std::size_t frame = kToy.frame_size();
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t k = 0; k < frame; ++k) {
      double acc = 0;
      for (std::size_t t = 0; t < 8; ++t) acc += m.at(t, j) * x.value()[t * frame + k];
      EXPECT_NEAR(y.value()[j * frame + k], acc, 1e-13);
    }
  EXPECT_THROW(temporal_mix(x, constant(Tensor<double>({6, 4}))), ShapeError);
}

TEST(Issm, WeightingVariantMixesWithoutIndices) {
  IssmConfig cfg;
  cfg.variant = SplitVariant::weighting;
  Fixture f(cfg);
  auto x = random_x(13);
  auto out = f.issm->forward(x);
  EXPECT_FALSE(out.indices.has_value());
  EXPECT_EQ(out.split.x_s.shape(), (Shape{4, 4, 4, 32}));
  auto [ms, md] = f.issm->mixing_matrices(f.issm->embed_temporal_tokens(x));
  for (const auto* m : {&ms, &md})
    for (std::size_t j = 0; j < 4; ++j) {
      double col = 0;
      for (std::size_t t = 0; t < 8; ++t) col += m->value().at(t, j);
      EXPECT_NEAR(col, 1.0, 1e-12);
    }
  EXPECT_THROW(f.issm->compute_offset_scales(f.issm->embed_temporal_tokens(x)), std::logic_error);
}

TEST(Issm, EvenOddVariantHasNoParameters) {
  IssmConfig cfg;
  cfg.variant = SplitVariant::even_odd;
  Fixture f(cfg);
  EXPECT_EQ(f.store.size(), 0u);
  auto x = random_x(14);
  auto out = f.issm->forward(x);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_TRUE(frame_equal(out.split.x_s.value(), i, x.value(), 2 * i));
    EXPECT_TRUE(frame_equal(out.split.x_d.value(), i, x.value(), 2 * i + 1));
  }
  EXPECT_THROW(f.issm->embed_temporal_tokens(x), std::logic_error);
}

TEST(Issm, ConfigurationErrors) {
  EXPECT_DOUBLE_EQ(resolve_range("T/2", 8), 4.0);
  EXPECT_DOUBLE_EQ(resolve_range("T/4", 8), 2.0);
  EXPECT_DOUBLE_EQ(resolve_range("1.5", 8), 1.5);
  EXPECT_THROW(resolve_range("T/3", 8), std::invalid_argument);
  EXPECT_THROW(resolve_range("-1", 8), std::invalid_argument);
  EXPECT_THROW(parse_split_variant("random"), std::invalid_argument);
  EXPECT_THROW(parse_init_mode("zero"), std::invalid_argument);
  EXPECT_THROW(Fixture({}, LatentShape{7, 4, 4, 32}), ShapeError);
  EXPECT_THROW(Fixture({}, LatentShape{8, 3, 4, 32}), ShapeError);
  for (auto v : {SplitVariant::issm, SplitVariant::entire_features, SplitVariant::weighting, SplitVariant::even_odd})
    EXPECT_EQ(parse_split_variant(to_string(v)), v);
}

}  // namespace
}  // namespace ifdd
