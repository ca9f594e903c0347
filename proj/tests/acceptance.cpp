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

// Acceptance run. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <bit>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "ifdd/checkpoint.hpp"
#include "ifdd/train.hpp"
#include "test_util.hpp"

namespace {

using namespace ifdd;
using testing::op_grad_error;
using testing::probe_sum;
using testing::random_tensor;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail = what;
      pass = false;
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool bits_equal(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

bool frame_bits_equal(const Tensor<double>& a, std::size_t i, const Tensor<double>& x, std::size_t t) {
  const std::size_t frame = x.numel() / x.dim(0);
  for (std::size_t k = 0; k < frame; ++k)
    if (std::bit_cast<std::uint64_t>(a[i * frame + k]) != std::bit_cast<std::uint64_t>(x[t * frame + k])) return false;
  return true;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Tensor<double> random_clip(const ModelConfig& cfg, std::mt19937_64& rng) {
  return random_tensor({cfg.clip.frames, cfg.clip.height, cfg.clip.width, cfg.clip.channels}, rng, 0.0, 1.0);
}

// ---------------------------------------------------------------------------

Outcome zero_init_identity() {
  Outcome o;
  const auto t0 = Clock::now();
  Model<double> model(ModelConfig{}, 7);
  for (const char* n : {"issm.w_s", "issm.b_s", "issm.w_d", "issm.b_d", "ladm.updater.mlp.fc2.weight",
                        "ladm.updater.mlp.fc2.bias", "ladm.predictor.mlp.fc2.weight", "ladm.predictor.mlp.fc2.bias"}) {
    model.params().get(n).mutable_value().fill(0.0);
  }
  std::mt19937_64 rng(3);
  const std::size_t c = model.latent().c;
  for (int trial = 0; trial < 4; ++trial) {
    const auto tr = model.forward(random_clip(model.config(), rng));
    const std::size_t half = model.latent().t / 2;
    for (std::size_t i = 0; i < half; ++i) {
      o.require(tr.indices->i_s.value()[i] == double(2 * i), "I_S is not the even index set");
      o.require(tr.indices->i_d.value()[i] == double(2 * i + 1), "I_D is not the odd index set");
      o.require(frame_bits_equal(tr.split.x_s.value(), i, tr.x.value(), 2 * i), "X_S differs from the even frames");
      o.require(frame_bits_equal(tr.split.x_d.value(), i, tr.x.value(), 2 * i + 1), "X_D differs from the odd frames");
    }
    o.require(bits_equal(tr.lifted.y_s.value(), reshape(tr.split.x_s, {tr.split.x_s.numel() / c, c}).value()),
              "Y_S differs from Vec X_S");
    o.require(bits_equal(tr.lifted.y_d.value(), reshape(tr.split.x_d, {tr.split.x_d.numel() / c, c}).value()),
              "Y_D differs from Vec X_D");
  }
  const double dt = seconds_since(t0);
  o.require(dt < 5.0, "runtime " + fmt("%.1f s", dt) + " exceeds 5 s");
  if (o.pass) o.detail = "indices, split frames and lifted tokens bit-exact over 4 clips (" + fmt("%.2f s", dt) + ")";
  return o;
}

Outcome gradient_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  constexpr double tol = 1e-4;
  std::mt19937_64 rng(16);
  auto r = [&](Shape s) { return random_tensor(s, rng); };
  using V = std::vector<Var<double>>;
  using Op = std::function<Var<double>(const V&)>;
  Tensor<double> idx({3}, std::vector<double>{0.3, 1.6, 2.45});
  const std::vector<std::tuple<std::string, Op, std::vector<Tensor<double>>>> ops = {
      {"matmul", [](const V& v) { return matmul(v[0], v[1]); }, {r({3, 4}), r({4, 2})}},
      {"transpose", [](const V& v) { return transpose(v[0]); }, {r({3, 4})}},
      {"reshape", [](const V& v) { return reshape(v[0], {6, 2}); }, {r({3, 4})}},
      {"add", [](const V& v) { return add(v[0], v[1]); }, {r({3, 4}), r({3, 4})}},
      {"sub", [](const V& v) { return sub(v[0], v[1]); }, {r({3, 4}), r({3, 4})}},
      {"mul", [](const V& v) { return mul(v[0], v[1]); }, {r({3, 4}), r({3, 4})}},
      {"scale", [](const V& v) { return scale(v[0], -1.7); }, {r({5})}},
      {"add_bias", [](const V& v) { return add_bias(v[0], v[1]); }, {r({2, 3, 4}), r({4})}},
      {"linear", [](const V& v) { return linear(v[0], v[1], v[2]); }, {r({3, 4}), r({4, 2}), r({2})}},
      {"concat", [](const V& v) { return concat(V{v[0], v[1]}, 1); }, {r({2, 3}), r({2, 2})}},
      {"slice_rows", [](const V& v) { return slice_rows(v[0], 1, 2); }, {r({4, 3})}},
      {"softmax", [](const V& v) { return softmax(v[0], 1); }, {r({3, 5})}},
      {"tanh", [](const V& v) { return tanh(v[0]); }, {r({6})}},
      {"gelu", [](const V& v) { return gelu(v[0]); }, {r({6})}},
      {"layer_norm", [](const V& v) { return layer_norm(v[0], v[1], v[2], 1e-5); }, {r({3, 6}), r({6}), r({6})}},
      {"huber", [](const V& v) { return huber(scale(v[0], 3.0), 1.0); }, {r({8})}},
      {"cross_entropy", [](const V& v) { return cross_entropy(v[0], 3); }, {r({5})}},
      {"clamp", [](const V& v) { return clamp(v[0], -0.5, 0.5); }, {r({8})}},
      {"avg_pool_spatial", [](const V& v) { return avg_pool_spatial(v[0]); }, {r({2, 4, 4, 3})}},
      {"avg_pool_temporal", [](const V& v) { return avg_pool_temporal(v[0]); }, {r({4, 2, 2, 3})}},
      {"spatial_mean", [](const V& v) { return spatial_mean(v[0]); }, {r({2, 3, 3, 2})}},
      {"fold_time_into_channels", [](const V& v) { return fold_time_into_channels(v[0]); }, {r({4, 2, 2, 3})}},
      {"conv2d", [](const V& v) { return conv2d(v[0], v[1], v[2]); }, {r({2, 5, 4, 3}), r({3, 3, 3, 2}), r({2})}},
      {"conv2d_strided", [](const V& v) { return conv2d(v[0], v[1], v[2], Conv2dParams{2, 1, 1}); },
       {r({1, 6, 6, 2}), r({3, 3, 2, 2}), r({2})}},
      {"conv2d_dilated", [](const V& v) { return conv2d(v[0], v[1], v[2], Conv2dParams{1, 2, 2}); },
       {r({1, 6, 6, 2}), r({3, 3, 2, 2}), r({2})}},
      {"interp_gather", [](const V& v) { return interp_gather(v[0], v[1]); }, {r({4, 2, 3}), idx}},
  };
  double worst_op = 0;
  std::string worst_name;
  for (const auto& [name, f, inputs] : ops) {
    const double e = op_grad_error(f, inputs);
    if (e > worst_op) worst_op = e, worst_name = name;
    o.require(e <= tol, name + " relative error " + fmt("%.2e", e));
  }

  // End to end, toy model, with non-trivial lifting layers.
  Model<double> model(ModelConfig{}, 21);
  o.require(model.latent().t == 8 && model.latent().h == 4 && model.latent().w == 4 && model.latent().c == 32,
            "toy latent is not 8x4x4x32");
  std::mt19937_64 prng(22);
  for (const char* n : {"ladm.updater.mlp.fc2.weight", "ladm.predictor.mlp.fc2.weight"}) {
    auto v = model.params().get(n);
    v.mutable_value() = random_tensor(v.shape(), prng, -0.05, 0.05);
  }
  const Tensor<double> clip = random_clip(model.config(), prng);
  const auto tr = model.forward(clip);
  bool fractional = false;
  for (const auto* iv : {&tr.indices->i_s, &tr.indices->i_d})
    for (double v : iv->value().data()) fractional |= v != std::floor(v);
  o.require(fractional, "indices are integral, interpolation path not exercised");

  GradCheckOptions opt;
  opt.step = 1e-5;
  opt.max_entries_per_param = 6;
  opt.seed = 5;
  const auto res = finite_diff_check([&] { return model.losses(model.forward(clip), 3).total; }, model.params().entries(), opt);
  o.require(res.max_rel_error <= tol,
            "end-to-end relative error " + fmt("%.2e", res.max_rel_error) + " at " + res.worst_param);

  // W_S and W_D receive their gradient only through the interpolation indices.
  model.params().zero_grad();
  backward(model.losses(model.forward(clip), 3).total);
  for (const char* n : {"issm.w_s", "issm.w_d"}) {
    double g = 0;
    for (double v : model.params().get(n).grad().data()) g = std::max(g, std::abs(v));
    o.require(g > 0, std::string(n) + " receives no gradient");
  }
  GradCheckOptions full = opt;
  full.max_entries_per_param = std::numeric_limits<std::size_t>::max();
  std::vector<std::pair<std::string, Var<double>>> offsets;
  for (const auto& e : model.params().entries())
    if (e.first == "issm.w_s" || e.first == "issm.w_d") offsets.push_back(e);
  const auto off = finite_diff_check([&] { return model.losses(model.forward(clip), 3).total; }, offsets, full);
  o.require(off.max_rel_error <= tol, "offset weights relative error " + fmt("%.2e", off.max_rel_error));

  const double dt = seconds_since(t0);
  o.require(dt < 120.0, "runtime " + fmt("%.1f s", dt) + " exceeds 2 min");
  if (o.pass) {
    o.detail = std::to_string(ops.size()) + " ops max " + fmt("%.1e", worst_op) + " (" + worst_name + "), end-to-end max " +
               fmt("%.1e", res.max_rel_error) + " over " + std::to_string(res.checked) + " entries, W_S/W_D max " +
               fmt("%.1e", off.max_rel_error) + " (" + fmt("%.1f s", dt) + ")";
  }
  return o;
}

double naive_huber(double v, double d) { return std::abs(v) <= d ? 0.5 * v * v : d * (std::abs(v) - 0.5 * d); }

double naive_lift_tc(const Tensor<double>& ys, const Tensor<double>& x, double delta) {
  const std::size_t t = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  double total = 0;
  for (std::size_t f = 0; f < t / 2; ++f)
    for (std::size_t k = 0; k < c; ++k) {
      double my = 0, mx = 0;
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          my += ys[((f * h + i) * w + j) * c + k];
          mx += 0.5 * (x.at(2 * f, i, j, k) + x.at(2 * f + 1, i, j, k));
        }
      total += naive_huber(my / double(h * w) - mx / double(h * w), delta);
    }
  return total;
}

Outcome oracle_equivalence() {
  Outcome o;
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + trial % 9;
    std::uniform_int_distribution<std::size_t> cls(0, k - 1);
    std::vector<std::size_t> pred(1000), lab(1000);
    for (std::size_t i = 0; i < 1000; ++i) pred[i] = cls(rng), lab[i] = cls(rng);
    const auto m = compute_metrics(pred, lab, k);
    std::size_t hits = 0;
    std::vector<std::size_t> tp(k, 0), support(k, 0);
    for (std::size_t i = 0; i < 1000; ++i) {
      hits += pred[i] == lab[i];
      ++support[lab[i]];
      tp[lab[i]] += pred[i] == lab[i];
    }
    double recall_sum = 0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < k; ++c)
      if (support[c]) recall_sum += double(tp[c]) / double(support[c]), ++present;
    o.require(m.war == double(hits) / 1000.0, "WAR differs from brute-force count");
    o.require(m.uar == recall_sum / double(present), "UAR differs from brute-force count");
  }
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const double delta = 0.05 + 0.2 * (trial % 5);
    const auto x = random_tensor({8, 4, 4, 6}, rng, -2, 2);
    const auto ys = random_tensor({64, 6}, rng, -2, 2);
    const double got = loss_lift(constant(ys), constant(x), ConstrainedDims::tc, delta).value()[0];
    worst = std::max(worst, std::abs(got - naive_lift_tc(ys, x, delta)));
  }
  o.require(worst <= 1e-10, "loss_lift deviates from the loop oracle by " + fmt("%.2e", worst));
  if (o.pass) o.detail = "UAR/WAR exact on 20x1000 pairs, loss_lift max |diff| " + fmt("%.1e", worst);
  return o;
}

Outcome structural_invariants() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> amp(0.01, 20.0);
  const char* ranges[] = {"T/2", "T/4", "3.5"};
  int issm_configs = 0, softmax_configs = 0, interp_configs = 0;
  for (int trial = 0; trial < 120; ++trial) {
    IssmConfig cfg;
    cfg.range_l = ranges[trial % 3];
    cfg.init_mode = trial % 5 == 0 ? InitMode::midpoint : InitMode::even_odd;
    const LatentShape lat{std::size_t(2 + 2 * (trial % 6)), 2, 4, 4};
    ParamStore<double> store;
    std::mt19937_64 init(1000 + trial);
    Issm<double> issm(lat, cfg, store, init);
    for (const char* n : {"issm.w_s", "issm.w_d"})
      for (double& v : store.get(n).mutable_value().data()) v *= amp(rng);
    const auto x = constant(random_tensor({lat.t, lat.h, lat.w, lat.c}, rng, -amp(rng), amp(rng)));
    const auto scales = issm.compute_offset_scales(issm.embed_temporal_tokens(x));
    for (const auto* a : {&scales.a_s, &scales.a_d})
      for (double v : a->value().data()) o.require(v > -1.0 && v < 1.0, "offset scale outside (-1, 1)");
    const auto out = issm.forward(x);
    for (const auto* idx : {&out.indices->i_s, &out.indices->i_d})
      for (double v : idx->value().data()) o.require(v >= 0.0 && v <= double(lat.t - 1), "index outside [0, T-1]");
    ++issm_configs;
  }
  std::uniform_int_distribution<std::size_t> ext(1, 6);
  std::uniform_real_distribution<double> sc(0.1, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rank = 1 + trial % 3;
    Shape s(rank);
    for (auto& e : s) e = ext(rng);
    const std::size_t axis = std::uniform_int_distribution<std::size_t>(0, rank - 1)(rng);
    const double a = sc(rng);
    const auto y = softmax(constant(random_tensor(s, rng, -a, a)), axis);
    std::size_t inner = 1;
    for (std::size_t d = axis + 1; d < rank; ++d) inner *= s[d];
    const std::size_t len = s[axis], outer = y.numel() / (len * inner);
    for (std::size_t p = 0; p < outer; ++p)
      for (std::size_t i = 0; i < inner; ++i) {
        double acc = 0;
        for (std::size_t l = 0; l < len; ++l) acc += y.value()[(p * len + l) * inner + i];
        o.require(std::abs(acc - 1.0) <= 1e-12, "softmax slice sums to " + fmt("%.17g", acc));
      }
    ++softmax_configs;
  }
  std::uniform_int_distribution<std::size_t> ext2(2, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = ext2(rng), c = ext2(rng);
    const auto x = constant(random_tensor({t, c}, rng, -5, 5));
    Tensor<double> idx({t / 2 + 1});
    for (double& v : idx.data()) v = std::uniform_real_distribution<double>(0, double(t - 1))(rng);
    const auto y = interp_gather(x, constant(idx));
    for (std::size_t i = 0; i < idx.numel(); ++i) {
      const auto lo = std::size_t(std::floor(idx[i]));
      const auto hi = std::min(lo + 1, t - 1);
      const double f = idx[i] - double(lo);
      for (std::size_t k = 0; k < c; ++k) {
        const double a = x.value().at(lo, k), b = x.value().at(hi, k);
        const double v = y.value().at(i, k);
        o.require(v >= std::min(a, b) - 1e-12 && v <= std::max(a, b) + 1e-12, "interpolation leaves the frame hull");
        o.require(std::abs(v - ((1 - f) * a + f * b)) <= 1e-12, "interpolation weights are not (1-f, f)");
      }
    }
    ++interp_configs;
  }
  const double dt = seconds_since(t0);
  o.require(dt < 60.0, "runtime " + fmt("%.1f s", dt) + " exceeds 1 min");
  if (o.pass) {
    o.detail = "index/tanh bounds " + std::to_string(issm_configs) + ", softmax " + std::to_string(softmax_configs) +
               ", convexity " + std::to_string(interp_configs) + " configs (" + fmt("%.1f s", dt) + ")";
  }
  return o;
}

Outcome synthetic_separability(const std::filesystem::path& work) {
  Outcome o;
  const auto t0 = Clock::now();
  const SynthConfig sc = synth_preset("easy");
  o.require(sc.num_classes == 7 && sc.num_clips == 840 && sc.frames == 16 && sc.height == 32 && sc.width == 32,
            "easy preset is not 7 classes x 840 clips of 16x32x32");
  const auto data = work / "easy";
  std::filesystem::remove_all(data);
  const auto manifest = generate_dataset(sc, 0, data);
  o.require(manifest.oracle_accuracy >= 0.99, "motif oracle accuracy " + fmt("%.4f", manifest.oracle_accuracy) + " < 0.99");
  const ClipSet set = load_clip_set(data);
  auto cfg = train_preset("toy");
  cfg.folds = 6;
  cfg.fold = 0;
  cfg.seed = 0;
  cfg.output = (work / "easy_run").string();
  const auto split = dataset_folds(set, 6)[0];
  o.require(split.train.size() + split.val.size() == 700 && split.test.size() == 140, "split is not 700 / 140");
  const auto run = train_on(cfg, set, [](const std::string& s) { std::cerr << "  [easy] " << s << "\n"; });
  const double war = run.mean_test_war;
  const double dt = seconds_since(t0);
  o.require(war >= 0.90, "test WAR " + fmt("%.4f", war) + " < 0.90");
  o.require(dt < 600.0, "runtime " + fmt("%.0f s", dt) + " exceeds 10 min");
  o.detail = (o.pass ? "" : o.detail + "; ") + "test WAR " + fmt("%.4f", war) + ", UAR " + fmt("%.4f", run.mean_test_uar) +
             ", oracle " + fmt("%.4f", manifest.oracle_accuracy) + ", 50 epochs (" + fmt("%.0f s", dt) + ")";
  return o;
}

Outcome ablation_ordering(const std::filesystem::path& work, std::size_t epochs) {
  Outcome o;
  const auto t0 = Clock::now();
  const SynthConfig sc = synth_preset("hard");
  const auto data = work / "hard";
  std::filesystem::remove_all(data);
  generate_dataset(sc, 0, data);
  const ClipSet set = load_clip_set(data);
  auto cfg = train_preset("toy");
  cfg.epochs = epochs;
  cfg.folds = 6;
  cfg.fold = 0;
  cfg.output = (work / "hard_ablation").string();
  std::vector<AblationVariant> grid;
  for (const auto& v : default_ablation_grid())
    if (v.name == "full" || v.name == "even_odd" || v.name == "no_ladm") grid.push_back(v);
  const auto res = run_ablation_suite(cfg, set, {0, 1, 2}, grid, true,
                                      [](const std::string& s) { std::cerr << "  [hard] " << s << "\n"; });
  for (const auto& r : res.rows) o.require(r.ok, r.variant + " seed " + std::to_string(r.seed) + " failed: " + r.error);
  const auto* full = res.find("full");
  const double f = full->war_mean;
  std::string table = "full " + fmt("%.4f", f);
  for (const char* other : {"even_odd", "no_ladm", kFrameDifferenceBaseline}) {
    const auto* s = res.find(other);
    table += std::string(", ") + other + " " + fmt("%.4f", s->war_mean);
    o.require(s->runs == 3 && full->runs == 3, std::string("missing runs for ") + other);
    o.require(f > s->war_mean, std::string("full does not exceed ") + other);
  }
  const double dt = seconds_since(t0);
  o.require(dt < 2700.0, "runtime " + fmt("%.0f s", dt) + " exceeds 45 min");
  o.detail = (o.pass ? "" : o.detail + "; ") + "mean test WAR over 3 seeds: " + table + ", " + std::to_string(epochs) +
             " epochs (" + fmt("%.0f s", dt) + ")";
  return o;
}

Outcome determinism(const std::filesystem::path& work) {
  Outcome o;
  const auto t0 = Clock::now();
  SynthConfig sc = synth_preset("hard");
  sc.num_clips = 70;
  sc.folds = 2;
  std::filesystem::remove_all(work / "det_a");
  std::filesystem::remove_all(work / "det_b");
  const auto ma = generate_dataset(sc, 5, work / "det_a");
  const auto mb = generate_dataset(sc, 5, work / "det_b");
  o.require(slurp(work / "det_a" / "manifest.json") == slurp(work / "det_b" / "manifest.json"), "manifests differ");
  for (const auto& e : ma.clips) {
    o.require(slurp(work / "det_a" / e.file) == slurp(work / "det_b" / e.file), "clip " + e.file + " differs");
  }
  const ClipSet set = load_clip_set(work / "det_a");
  // dataset write→read
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto clip = render_clip(sc, set.labels[i], ma.clips[i].seed);
    const auto& back = set.clips[i];
    bool same = clip.frames.shape() == back.shape();
    for (std::size_t k = 0; same && k < back.numel(); ++k)
      same = std::bit_cast<std::uint32_t>(clip.frames[k]) == std::bit_cast<std::uint32_t>(back[k]);
    o.require(same, "clip " + std::to_string(i) + " does not read back bitwise");
  }
  const auto mback = load_manifest(work / "det_a");
  o.require(to_json(mback) == to_json(ma), "manifest does not round-trip");

  auto cfg = train_preset("toy");
  cfg.epochs = 2;
  cfg.warmup_epochs = 1;
  cfg.folds = 2;
  cfg.fold = 0;
  cfg.batch_size = 4;
  cfg.grad_check = false;
  cfg.output = (work / "det_run_a").string();
  const auto ra = train_on(cfg, set);
  cfg.output = (work / "det_run_b").string();
  const auto rb = train_on(cfg, set);
  const auto& ea = ra.folds[0].epochs;
  const auto& eb = rb.folds[0].epochs;
  o.require(ea.size() == 2 && eb.size() == 2, "loss traces have the wrong length");
  for (std::size_t e = 0; e < std::min(ea.size(), eb.size()); ++e) {
    for (auto [x, y] : {std::pair{ea[e].train_cls, eb[e].train_cls}, {ea[e].train_lift, eb[e].train_lift},
                        {ea[e].train_total, eb[e].train_total}, {ea[e].val_total, eb[e].val_total}}) {
      o.require(std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y), "loss traces differ");
    }
  }
  o.require(slurp(ra.folds[0].checkpoint) == slurp(rb.folds[0].checkpoint), "checkpoints of identical runs differ");

  for (int precision = 0; precision < 2; ++precision) {
    const auto path = work / (precision ? "rt_f.ckpt" : "rt_d.ckpt");
    bool same = true;
    if (precision) {
      Model<float> a(ModelConfig{}, 3), b(ModelConfig{}, 4);
      save_checkpoint(path, a);
      load_checkpoint_into(path, b);
      for (std::size_t k = 0; k < a.params().size(); ++k) {
        const auto& x = a.params().entries()[k].second.value();
        const auto& y = b.params().entries()[k].second.value();
        for (std::size_t i = 0; i < x.numel(); ++i) same &= std::bit_cast<std::uint32_t>(x[i]) == std::bit_cast<std::uint32_t>(y[i]);
      }
    } else {
      Model<double> a(ModelConfig{}, 3), b(ModelConfig{}, 4);
      save_checkpoint(path, a);
      load_checkpoint_into(path, b);
      for (std::size_t k = 0; k < a.params().size(); ++k) {
        same &= bits_equal(a.params().entries()[k].second.value(), b.params().entries()[k].second.value());
      }
    }
    o.require(same, "checkpoint does not round-trip bitwise");
  }
  const double dt = seconds_since(t0);
  o.require(dt < 120.0, "runtime " + fmt("%.1f s", dt) + " exceeds 2 min");
  if (o.pass) o.detail = "loss traces, dataset and checkpoints bitwise reproducible (" + fmt("%.1f s", dt) + ")";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IFDD acceptance criteria"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work-dir", work, "Scratch directory for datasets and runs");
  app.add_option("--only", only, "Run only these criteria (1-7)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  std::filesystem::create_directories(work);

  // AC6 runs 9 trainings plus the baseline within its 45-minute budget; at
  // roughly 6 s per epoch on one core this allows 30 epochs per run.
  constexpr std::size_t kAblationEpochs = 30;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"zero-init identity", zero_init_identity},
      {"gradient suite", gradient_suite},
      {"oracle equivalence", oracle_equivalence},
      {"structural invariants", structural_invariants},
      {"synthetic separability", [&] { return synthetic_separability(work); }},
      {"ablation ordering", [&] { return ablation_ordering(work, kAblationEpochs); }},
      {"determinism and round-trips", [&] { return determinism(work); }},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (!only.empty() && std::find(only.begin(), only.end(), int(k + 1)) == only.end()) continue;
    Outcome out;
    try {
      out = criteria[k].second();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    failed += !out.pass;
    std::printf("AC%zu %s  %s: %s\n", k + 1, out.pass ? "PASS" : "FAIL", criteria[k].first.c_str(), out.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
