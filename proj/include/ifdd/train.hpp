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

// Training, evaluation and ablation harness.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ifdd/checkpoint.hpp"
#include "ifdd/config.hpp"
#include "ifdd/data.hpp"
#include "ifdd/gradcheck.hpp"
#include "ifdd/metrics.hpp"
#include "ifdd/model.hpp"
#include "ifdd/optim.hpp"

namespace ifdd {

/// Failure while training (non-finite loss, failed gradient gate, ...).
class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using LogFn = std::function<void(const std::string&)>;

/// A dataset fully loaded in memory.
struct ClipSet {
  std::filesystem::path dir;
  DatasetManifest manifest;
  std::vector<Tensor<float>> clips;
  std::vector<std::size_t> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return clips.size(); }
};

inline ClipSet load_clip_set(const std::filesystem::path& dir) {
  ClipSet s;
  s.dir = dir;
  s.manifest = load_manifest(dir);
  for (const auto& e : s.manifest.clips) {
    s.clips.push_back(load_clip(dir / e.file, s.manifest.clip_shape));
    s.labels.push_back(e.label);
    s.ids.push_back(e.file);
  }
  if (s.clips.empty()) throw DataError(dir.string() + ": dataset has no clips");
  return s;
}

/// Checks that a model configuration can consume a dataset.
inline void check_compatible(const ModelConfig& m, const ClipSet& set) {
  const Shape want{m.clip.frames, m.clip.height, m.clip.width, m.clip.channels};
  if (set.manifest.clip_shape != want) {
    throw ConfigError("dataset clip shape " + to_string(set.manifest.clip_shape) + " differs from model clip shape " +
                      to_string(want));
  }
  if (set.manifest.num_classes != m.head.num_classes) {
    throw ConfigError("dataset has " + std::to_string(set.manifest.num_classes) + " classes, head.num_classes is " +
                      std::to_string(m.head.num_classes));
  }
}

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0;
  double train_cls = 0, train_lift = 0, train_total = 0;  // mean per sample
  double val_cls = 0, val_lift = 0, val_total = 0;
  double val_uar = 0, val_war = 0;
};

struct SampleOutput {
  std::size_t index = 0;
  std::size_t label = 0;
  std::size_t predicted = 0;
  std::vector<double> probabilities;
};

struct EvalResult {
  MetricsReport metrics;
  double cls = 0, lift = 0, total = 0;  // mean per sample
  std::vector<SampleOutput> samples;
};

struct FoldRecord {
  std::size_t fold = 0;
  std::size_t train_size = 0, val_size = 0, test_size = 0;
  EvalResult initial_val;
  std::vector<EpochRecord> epochs;
  bool early_stopped = false;
  std::size_t best_epoch = 0;  // index into epochs; meaningless when epochs is empty
  double best_val_war = 0;
  EvalResult test;
  std::string checkpoint;
  std::optional<GradCheckResult> grad_check;
};

struct RunRecord {
  TrainConfig config;
  std::vector<FoldRecord> folds;
  double wall_clock_seconds = 0;
  double mean_test_uar = 0, mean_test_war = 0;
};

// ---------------------------------------------------------------------------

template <class T>
Tensor<T> prepare_input(const Tensor<float>& clip, bool flip) {
  Tensor<T> out(clip.shape());
  const std::size_t t_n = clip.dim(0), h = clip.dim(1), w = clip.dim(2), c = clip.dim(3);
  for (std::size_t t = 0; t < t_n; ++t)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t sx = flip ? w - 1 - x : x;
        for (std::size_t k = 0; k < c; ++k) out[((t * h + y) * w + x) * c + k] = T(clip[((t * h + y) * w + sx) * c + k]);
      }
  return out;
}

inline std::vector<double> softmax_probs(const Tensor<double>& logits) {
  std::vector<double> p(logits.numel());
  double mx = logits[0];
  for (std::size_t i = 1; i < p.size(); ++i) mx = std::max(mx, logits[i]);
  double z = 0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
  for (double& v : p) v /= z;
  return p;
}

/// Forward pass over `indices` without recording a graph.
template <class T>
EvalResult evaluate_model(const Model<T>& model, const ClipSet& set, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("evaluation split is empty");
  NoGradGuard guard;
  EvalResult r;
  std::vector<std::size_t> preds, labels;
  for (std::size_t i : indices) {
    const auto tr = model.forward(prepare_input<T>(set.clips.at(i), false));
    const auto parts = model.losses(tr, set.labels[i]);
    r.cls += double(parts.cls.value()[0]);
    r.lift += double(parts.lift.value()[0]);
    r.total += double(parts.total.value()[0]);
    SampleOutput s;
    s.index = i;
    s.label = set.labels[i];
    s.probabilities = softmax_probs(tr.logits.value().template cast<double>());
    s.predicted = std::size_t(std::max_element(s.probabilities.begin(), s.probabilities.end()) - s.probabilities.begin());
    preds.push_back(s.predicted);
    labels.push_back(s.label);
    r.samples.push_back(std::move(s));
  }
  const double n = double(indices.size());
  r.cls /= n;
  r.lift /= n;
  r.total /= n;
  r.metrics = compute_metrics(preds, labels, model.config().head.num_classes);
  return r;
}

/// Finite-difference check of the summed batch loss in double precision,
/// using the current parameter values of `model`.
template <class T>
GradCheckResult gradient_gate(const Model<T>& model, const ClipSet& set, const std::vector<std::size_t>& batch,
                              std::size_t entries_per_param, std::uint64_t seed) {
  Model<double> probe(model.config(), 0);
  probe.params().copy_values_from(model.params());
  std::vector<Tensor<double>> inputs;
  for (std::size_t i : batch) inputs.push_back(prepare_input<double>(set.clips.at(i), false));
  auto loss_fn = [&]() {
    Var<double> total;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      Var<double> l = probe.losses(probe.forward(inputs[k]), set.labels[batch[k]]).total;
      total = total.defined() ? add(total, l) : l;
    }
    return total;
  };
  GradCheckOptions opt;
  opt.step = 1e-5;
  opt.max_entries_per_param = entries_per_param;
  opt.seed = seed;
  return finite_diff_check(loss_fn, probe.params().entries(), opt);
}

namespace detail {

inline void ensure_dir(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec || !std::filesystem::is_directory(p)) throw TrainError("cannot create directory " + p.string());
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

/// Trains one fold. Returns the record with test metrics of the best
/// validation-WAR parameters, which are also written to `out_dir/best.ckpt`.
template <class T>
FoldRecord train_fold(const TrainConfig& cfg, const ClipSet& set, const FoldSplit& split, std::size_t fold,
                      const std::filesystem::path& out_dir, const LogFn& log) {
  if (split.train.empty() || split.val.empty() || split.test.empty()) {
    throw TrainError("fold " + std::to_string(fold) + " has an empty train, validation or test split");
  }
  detail::ensure_dir(out_dir);
  FoldRecord rec;
  rec.fold = fold;
  rec.train_size = split.train.size();
  rec.val_size = split.val.size();
  rec.test_size = split.test.size();
  rec.checkpoint = (out_dir / "best.ckpt").string();

  const std::uint64_t fold_seed = splitmix64(cfg.seed ^ splitmix64(0xf01dULL + fold));
  Model<T> model(cfg.model, fold_seed);
  AdamW<T> opt(model.params(), cfg.optimizer());
  std::mt19937_64 rng(splitmix64(fold_seed + 1));

  if (cfg.grad_check) {
    std::vector<std::size_t> batch = split.train;
    std::shuffle(batch.begin(), batch.end(), rng);
    batch.resize(std::min<std::size_t>(2, batch.size()));
    rec.grad_check = gradient_gate(model, set, batch, cfg.grad_check_entries, fold_seed);
    if (log) log("fold " + std::to_string(fold) + ": gradient gate max relative error " + detail::fmt(rec.grad_check->max_rel_error) +
                 " (" + rec.grad_check->worst_param + ")");
    if (!(rec.grad_check->max_rel_error <= cfg.grad_check_tolerance)) {
      throw TrainError("gradient gate failed: max relative error " + std::to_string(rec.grad_check->max_rel_error) + " at " +
                       rec.grad_check->worst_param + "[" + std::to_string(rec.grad_check->worst_index) + "], analytic " +
                       std::to_string(rec.grad_check->worst_analytic) + " vs numeric " +
                       std::to_string(rec.grad_check->worst_numeric));
    }
  }

  rec.initial_val = evaluate_model(model, set, split.val);
  std::vector<Tensor<T>> best;
  auto snapshot = [&]() {
    best.clear();
    for (const auto& [_, v] : model.params().entries()) best.push_back(v.value());
  };
  snapshot();
  rec.best_val_war = rec.initial_val.metrics.war;

  const auto sched = cfg.schedule();
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord er;
    er.epoch = epoch;
    er.lr = lr_schedule(epoch, sched);
    std::vector<std::size_t> order = split.train;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      opt.zero_grad();
      for (std::size_t k = b; k < end; ++k) {
        const std::size_t i = order[k];
        const bool flip = cfg.flip && coin(rng) < 0.5;
        try {
          const auto tr = model.forward(prepare_input<T>(set.clips[i], flip));
          const auto parts = model.losses(tr, set.labels[i]);
          er.train_cls += double(parts.cls.value()[0]);
          er.train_lift += double(parts.lift.value()[0]);
          er.train_total += double(parts.total.value()[0]);
          backward(parts.total);
        } catch (const NumericError& e) {
          throw TrainError("non-finite value in fold " + std::to_string(fold) + ", epoch " + std::to_string(epoch) +
                           ", clip " + set.ids[i] + ": " + e.what());
        }
      }
      opt.step(er.lr);
    }
    for (const auto& [name, v] : model.params().entries()) {
      if (!v.value().all_finite()) {
        throw TrainError("parameter " + name + " became non-finite in fold " + std::to_string(fold) + ", epoch " +
                         std::to_string(epoch));
      }
    }
    const double n = double(order.size());
    er.train_cls /= n;
    er.train_lift /= n;
    er.train_total /= n;
    const EvalResult val = evaluate_model(model, set, split.val);
    er.val_cls = val.cls;
    er.val_lift = val.lift;
    er.val_total = val.total;
    er.val_uar = val.metrics.uar;
    er.val_war = val.metrics.war;
    if (rec.epochs.empty() || er.val_war > rec.best_val_war) {
      rec.best_val_war = er.val_war;
      rec.best_epoch = epoch;
      snapshot();
    }
    rec.epochs.push_back(er);
    if (log) {
      log("fold " + std::to_string(fold) + " epoch " + std::to_string(epoch) + " lr " + detail::fmt(er.lr) + " loss " +
          detail::fmt(er.train_total) + " (cls " + detail::fmt(er.train_cls) + ", lift " + detail::fmt(er.train_lift) +
          ") val WAR " + detail::fmt(er.val_war));
    }
  }

  auto entries = model.params().entries();
  for (std::size_t k = 0; k < entries.size(); ++k) entries[k].second.mutable_value() = best[k];
  save_checkpoint(out_dir / "best.ckpt", model);
  rec.test = evaluate_model(model, set, split.test);
  return rec;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const MetricsReport& m) {
  return {{"uar", m.uar}, {"war", m.war}, {"per_class_recall", m.per_class_recall}, {"class_support", m.class_support},
          {"confusion", m.confusion}};
}

inline nlohmann::json to_json(const GradCheckResult& g) {
  return {{"max_rel_error", g.max_rel_error}, {"worst_param", g.worst_param}, {"worst_index", g.worst_index},
          {"analytic", g.worst_analytic},     {"numeric", g.worst_numeric},   {"checked", g.checked}};
}

inline nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : f.epochs) {
      epochs.push_back({{"epoch", e.epoch},
                        {"lr", e.lr},
                        {"train", {{"cls", e.train_cls}, {"lift", e.train_lift}, {"total", e.train_total}}},
                        {"val",
                         {{"cls", e.val_cls},
                          {"lift", e.val_lift},
                          {"total", e.val_total},
                          {"uar", e.val_uar},
                          {"war", e.val_war}}}});
    }
    nlohmann::json fj = {{"fold", f.fold},
                         {"sizes", {{"train", f.train_size}, {"val", f.val_size}, {"test", f.test_size}}},
                         {"initial_val", to_json(f.initial_val.metrics)},
                         {"epochs", epochs},
                         {"epochs_completed", f.epochs.size()},
                         {"early_stopped", f.early_stopped},
                         {"best_val_war", f.best_val_war},
                         {"test", to_json(f.test.metrics)},
                         {"checkpoint", f.checkpoint}};
    if (!f.epochs.empty()) fj["best_epoch"] = f.best_epoch;
    if (f.grad_check) fj["grad_check"] = to_json(*f.grad_check);
    folds.push_back(fj);
  }
  return {{"config", to_json(r.config)},
          {"folds", folds},
          {"mean_test", {{"uar", r.mean_test_uar}, {"war", r.mean_test_war}}},
          {"wall_clock_seconds", r.wall_clock_seconds}};
}

inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<std::pair<std::string, MetricsReport>>& rows,
                              std::size_t num_classes) {
  std::ofstream out(path);
  if (!out) throw TrainError("cannot write " + path.string());
  out << "split,uar,war";
  for (std::size_t c = 0; c < num_classes; ++c) out << ",recall_" << c;
  out << "\n";
  for (const auto& [name, m] : rows) {
    out << name << "," << detail::fmt(m.uar) << "," << detail::fmt(m.war);
    for (std::size_t c = 0; c < num_classes; ++c) out << "," << detail::fmt(c < m.per_class_recall.size() ? m.per_class_recall[c] : 0.0);
    out << "\n";
  }
}

inline void write_confidence_csv(const std::filesystem::path& path, const ClipSet& set,
                                 const std::vector<std::pair<std::size_t, const EvalResult*>>& parts, std::size_t num_classes) {
  std::ofstream out(path);
  if (!out) throw TrainError("cannot write " + path.string());
  out << "fold,clip,label,predicted";
  for (std::size_t c = 0; c < num_classes; ++c) out << ",p_" << c;
  out << "\n";
  for (const auto& [fold, res] : parts) {
    for (const auto& s : res->samples) {
      out << fold << "," << set.ids[s.index] << "," << s.label << "," << s.predicted;
      for (double p : s.probabilities) out << "," << detail::fmt(p);
      out << "\n";
    }
  }
}

inline std::vector<FoldSplit> dataset_folds(const ClipSet& set, std::size_t k) {
  return kfold_split(set.manifest, k, set.manifest.fold_seed);
}

/// Runs the configured folds on an already loaded dataset and writes
/// run.json, metrics.csv, confidence.csv and per-fold checkpoints.
inline RunRecord train_on(const TrainConfig& cfg, const ClipSet& set, const LogFn& log = {}) {
  validate(cfg);
  check_compatible(cfg.model, set);
  const auto t0 = std::chrono::steady_clock::now();
  const std::filesystem::path out(cfg.output);
  detail::ensure_dir(out);
  const auto splits = dataset_folds(set, cfg.folds);
  RunRecord run;
  run.config = cfg;
  for (std::size_t f = 0; f < cfg.folds; ++f) {
    if (cfg.fold >= 0 && std::size_t(cfg.fold) != f) continue;
    const auto dir = out / ("fold_" + std::to_string(f));
    run.folds.push_back(cfg.precision == "double" ? train_fold<double>(cfg, set, splits[f], f, dir, log)
                                                  : train_fold<float>(cfg, set, splits[f], f, dir, log));
  }
  for (const auto& f : run.folds) {
    run.mean_test_uar += f.test.metrics.uar / double(run.folds.size());
    run.mean_test_war += f.test.metrics.war / double(run.folds.size());
  }
  run.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<std::pair<std::string, MetricsReport>> rows;
  std::vector<std::pair<std::size_t, const EvalResult*>> conf;
  for (const auto& f : run.folds) {
    rows.emplace_back("fold_" + std::to_string(f.fold) + "_test", f.test.metrics);
    conf.emplace_back(f.fold, &f.test);
  }
  write_metrics_csv(out / "metrics.csv", rows, cfg.model.head.num_classes);
  write_confidence_csv(out / "confidence.csv", set, conf, cfg.model.head.num_classes);
  std::ofstream(out / "run.json") << to_json(run).dump(2) << "\n";
  return run;
}

inline RunRecord train(const TrainConfig& cfg, const LogFn& log = {}) {
  validate(cfg);
  if (cfg.dataset.empty()) throw ConfigError("no dataset configured");
  return train_on(cfg, load_clip_set(cfg.dataset), log);
}

// ---------------------------------------------------------------------------
// Evaluation of a saved checkpoint
// ---------------------------------------------------------------------------

/// Selects clip indices of a split: "train", "val", "test" (of `fold`) or "all".
inline std::vector<std::size_t> split_indices(const ClipSet& set, const std::string& split, std::size_t folds, std::size_t fold) {
  if (split == "all") {
    std::vector<std::size_t> all(set.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  const auto s = dataset_folds(set, folds).at(fold);
  if (split == "train") return s.train;
  if (split == "val") return s.val;
  if (split == "test") return s.test;
  throw ConfigError("unknown split '" + split + "' (expected train, val, test or all)");
}

inline std::uint8_t checkpoint_dtype(const std::string& bytes) {
  detail::Reader r(bytes);
  r.take(10, "header");
  r.take(r.get<std::uint32_t>("config length"), "config");
  if (r.get<std::uint32_t>("parameter count") == 0) throw CheckpointError("checkpoint holds no parameters");
  r.take(r.get<std::uint32_t>("parameter name length"), "parameter name");
  return r.get<std::uint8_t>("dtype");
}

/// Loads a checkpoint and evaluates it on `indices`, in the precision it was stored in.
inline EvalResult evaluate_checkpoint(const std::filesystem::path& ckpt, const ClipSet& set,
                                      const std::vector<std::size_t>& indices) {
  const std::string bytes = detail::read_file(ckpt);
  const ModelConfig mc = checkpoint_config(bytes);
  check_compatible(mc, set);
  if (checkpoint_dtype(bytes) == 8) {
    Model<double> model(mc, 0);
    decode_checkpoint_into(bytes, model);
    return evaluate_model(model, set, indices);
  }
  Model<float> model(mc, 0);
  decode_checkpoint_into(bytes, model);
  return evaluate_model(model, set, indices);
}

/// Writes the split indices emitted for each clip as CSV rows:
/// clip, label, side (S or D), then one column per index.
inline void inspect_splits(const std::filesystem::path& ckpt, const ClipSet& set, const std::vector<std::size_t>& indices,
                           const std::filesystem::path& out_csv) {
  const std::string bytes = detail::read_file(ckpt);
  const ModelConfig mc = checkpoint_config(bytes);
  check_compatible(mc, set);
  if (mc.issm.variant == SplitVariant::weighting) {
    throw ConfigError("the weighting split mixes frames and emits no indices to inspect");
  }
  Model<double> model(mc, 0);
  decode_checkpoint_into(bytes, model);
  std::ofstream out(out_csv);
  if (!out) throw TrainError("cannot write " + out_csv.string());
  const std::size_t half = model.latent().t / 2;
  out << "clip,label,side";
  for (std::size_t k = 0; k < half; ++k) out << ",i_" << k;
  out << "\n";
  NoGradGuard guard;
  for (std::size_t i : indices) {
    const auto tr = model.forward(prepare_input<double>(set.clips.at(i), false));
    const auto& idx = *tr.indices;
    for (const auto& [side, v] : {std::pair<const char*, const Var<double>*>{"S", &idx.i_s}, {"D", &idx.i_d}}) {
      out << set.ids[i] << "," << set.labels[i] << "," << side;
      for (double x : v->value().data()) out << "," << detail::fmt(x);
      out << "\n";
    }
  }
}

// ---------------------------------------------------------------------------
// Frame-difference baseline
// ---------------------------------------------------------------------------

/// Mean absolute adjacent-frame difference, averaged over channels and
/// pooled on a `grid`×`grid` spatial layout: (T₀−1)·grid² features.
inline std::vector<double> frame_difference_features(const Tensor<float>& clip, std::size_t grid = 8) {
  const std::size_t t_n = clip.dim(0), h = clip.dim(1), w = clip.dim(2), c = clip.dim(3);
  if (h % grid || w % grid) throw ShapeError("frame size must be divisible by the pooling grid");
  std::vector<double> f((t_n - 1) * grid * grid, 0.0);
  const double norm = double(c * (h / grid) * (w / grid));
  for (std::size_t t = 0; t + 1 < t_n; ++t)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t k = 0; k < c; ++k) {
          const std::size_t a = ((t * h + y) * w + x) * c + k, b = (((t + 1) * h + y) * w + x) * c + k;
          f[(t * grid + y / (h / grid)) * grid + x / (w / grid)] += std::abs(double(clip[b]) - double(clip[a])) / norm;
        }
  return f;
}

struct BaselineConfig {
  std::size_t grid = 8;
  std::size_t steps = 300;
  double lr = 1e-2;
  double weight_decay = 1e-3;
};

/// Softmax regression over standardized frame-difference features, trained
/// full-batch with AdamW; returns test metrics.
inline MetricsReport frame_difference_baseline(const ClipSet& set, const FoldSplit& split, std::size_t num_classes,
                                               const BaselineConfig& bc = {}) {
  auto feats = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::vector<double>> out;
    for (std::size_t i : idx) out.push_back(frame_difference_features(set.clips.at(i), bc.grid));
    return out;
  };
  std::vector<std::size_t> fit = split.train;
  fit.insert(fit.end(), split.val.begin(), split.val.end());
  auto xtr = feats(fit);
  auto xte = feats(split.test);
  const std::size_t d = xtr.front().size();
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (const auto& r : xtr)
    for (std::size_t j = 0; j < d; ++j) mu[j] += r[j] / double(xtr.size());
  for (const auto& r : xtr)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (r[j] - mu[j]) * (r[j] - mu[j]) / double(xtr.size());
  for (double& s : sd) s = std::sqrt(s) + 1e-8;
  for (auto* m : {&xtr, &xte})
    for (auto& r : *m)
      for (std::size_t j = 0; j < d; ++j) r[j] = (r[j] - mu[j]) / sd[j];

  Tensor<double> w({d, num_classes}), b({num_classes});
  Tensor<double> gw({d, num_classes}), gb({num_classes});
  AdamState<double> sw, sb;
  AdamWConfig ac;
  ac.weight_decay = bc.weight_decay;
  auto logits = [&](const std::vector<double>& x) {
    Tensor<double> z({num_classes});
    for (std::size_t c = 0; c < num_classes; ++c) {
      double s = b[c];
      for (std::size_t j = 0; j < d; ++j) s += x[j] * w[j * num_classes + c];
      z[c] = s;
    }
    return z;
  };
  for (std::size_t step = 0; step < bc.steps; ++step) {
    gw.fill(0);
    gb.fill(0);
    for (std::size_t n = 0; n < xtr.size(); ++n) {
      auto p = softmax_probs(logits(xtr[n]));
      p[set.labels[fit[n]]] -= 1.0;
      for (std::size_t c = 0; c < num_classes; ++c) {
        const double g = p[c] / double(xtr.size());
        gb[c] += g;
        for (std::size_t j = 0; j < d; ++j) gw[j * num_classes + c] += g * xtr[n][j];
      }
    }
    adamw_step(w, gw, sw, bc.lr, ac);
    adamw_step(b, gb, sb, bc.lr, ac);
  }
  std::vector<std::size_t> preds, labels;
  for (std::size_t n = 0; n < xte.size(); ++n) {
    const auto p = softmax_probs(logits(xte[n]));
    preds.push_back(std::size_t(std::max_element(p.begin(), p.end()) - p.begin()));
    labels.push_back(set.labels[split.test[n]]);
  }
  return compute_metrics(preds, labels, num_classes);
}

// ---------------------------------------------------------------------------
// Ablation suite
// ---------------------------------------------------------------------------

struct AblationVariant {
  std::string name;
  std::vector<std::string> overrides;
};

/// The default grid of twelve variants.
inline std::vector<AblationVariant> default_ablation_grid() {
  return {{"full", {}},
          {"even_odd", {"issm.variant=even_odd"}},
          {"no_ladm", {"ladm.enabled=false"}},
          {"neither", {"issm.variant=even_odd", "ladm.enabled=false"}},
          {"entire_features", {"issm.variant=entire_features"}},
          {"weighting", {"issm.variant=weighting"}},
          {"predictor_first", {"ladm.order=predictor_first"}},
          {"range_t4", {"issm.range_l=T/4"}},
          {"range_t2", {"issm.range_l=T/2"}},
          {"midpoint_init", {"issm.init_mode=midpoint"}},
          {"lift_loss_off", {"loss.constrained_dims=none"}},
          {"lift_loss_thwc", {"loss.constrained_dims=thwc"}}};
}

inline constexpr const char* kFrameDifferenceBaseline = "frame_difference";

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double uar = 0, war = 0;
};

struct AblationSummary {
  std::string variant;
  std::size_t runs = 0;
  double uar_mean = 0, uar_std = 0, war_mean = 0, war_std = 0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<AblationSummary> summary;

  const AblationSummary* find(const std::string& variant) const {
    for (const auto& s : summary)
      if (s.variant == variant) return &s;
    return nullptr;
  }
};

inline AblationSummary summarize(const std::string& variant, const std::vector<AblationRow>& rows) {
  AblationSummary s;
  s.variant = variant;
  std::vector<double> u, w;
  for (const auto& r : rows) {
    if (r.variant != variant || !r.ok) continue;
    u.push_back(r.uar);
    w.push_back(r.war);
  }
  s.runs = u.size();
  if (u.empty()) return s;
  auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0;
    for (double x : v) mean += x / double(v.size());
    sd = 0;
    if (v.size() > 1) {
      for (double x : v) sd += (x - mean) * (x - mean);
      sd = std::sqrt(sd / double(v.size() - 1));
    }
  };
  stats(u, s.uar_mean, s.uar_std);
  stats(w, s.war_mean, s.war_std);
  return s;
}

inline void write_ablation_csv(const std::filesystem::path& path, const AblationResult& res) {
  std::ofstream out(path);
  if (!out) throw TrainError("cannot write " + path.string());
  out << "variant,seed,uar,war,uar_std,war_std,status\n";
  for (const auto& r : res.rows) {
    out << r.variant << "," << r.seed << "," << detail::fmt(r.uar) << "," << detail::fmt(r.war) << ",,,";
    std::string status = r.ok ? "ok" : "failed: " + r.error;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out << status << "\n";
  }
  for (const auto& s : res.summary) {
    out << s.variant << ",mean," << detail::fmt(s.uar_mean) << "," << detail::fmt(s.war_mean) << ","
        << detail::fmt(s.uar_std) << "," << detail::fmt(s.war_std) << "," << s.runs << " runs\n";
  }
}

/// Trains every variant for every seed and adds the frame-difference
/// baseline. Test metrics are averaged over the configured folds. A variant
/// that throws is recorded as failed and the suite continues.
inline AblationResult run_ablation_suite(const TrainConfig& base, const ClipSet& set, const std::vector<std::uint64_t>& seeds,
                                         const std::vector<AblationVariant>& grid, bool include_baseline,
                                         const LogFn& log = {}) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  const std::filesystem::path root(base.output);
  detail::ensure_dir(root);
  AblationResult res;
  for (std::uint64_t seed : seeds) {
    for (const auto& v : grid) {
      AblationRow row;
      row.variant = v.name;
      row.seed = seed;
      try {
        TrainConfig cfg = base;
        for (const auto& o : v.overrides) cfg = apply_override(cfg, o);
        cfg.seed = seed;
        cfg.output = (root / v.name / ("seed_" + std::to_string(seed))).string();
        if (log) log("ablation: " + v.name + " seed " + std::to_string(seed));
        const RunRecord run = train_on(cfg, set, log);
        row.uar = run.mean_test_uar;
        row.war = run.mean_test_war;
        row.ok = true;
      } catch (const std::exception& e) {
        row.error = e.what();
        if (log) log("ablation: " + v.name + " seed " + std::to_string(seed) + " failed: " + e.what());
      }
      res.rows.push_back(row);
    }
    if (include_baseline) {
      AblationRow row;
      row.variant = kFrameDifferenceBaseline;
      row.seed = seed;
      try {
        const auto splits = dataset_folds(set, base.folds);
        std::size_t n = 0;
        for (std::size_t f = 0; f < base.folds; ++f) {
          if (base.fold >= 0 && std::size_t(base.fold) != f) continue;
          const auto m = frame_difference_baseline(set, splits[f], base.model.head.num_classes);
          row.uar += m.uar;
          row.war += m.war;
          ++n;
        }
        row.uar /= double(n);
        row.war /= double(n);
        row.ok = true;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      res.rows.push_back(row);
    }
  }
  for (const auto& v : grid) res.summary.push_back(summarize(v.name, res.rows));
  if (include_baseline) res.summary.push_back(summarize(kFrameDifferenceBaseline, res.rows));
  write_ablation_csv(root / "ablation.csv", res);
  return res;
}

}  // namespace ifdd
