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

// ifdd: dataset generation, training, evaluation and ablations.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdio>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ifdd/train.hpp"

namespace {

using namespace ifdd;

struct ConfigArgs {
  std::string config_file;
  std::string preset = "toy";
  std::vector<std::string> overrides;
  std::string dataset;
  std::string output;

  void attach(CLI::App* app, bool with_output = true) {
    app->add_option("--config", config_file, "JSON configuration file");
    app->add_option("--preset", preset, "Base preset: toy or paper")->check(CLI::IsMember({"toy", "paper"}));
    app->add_option("--set", overrides, "Override, e.g. --set issm.variant=even_odd (repeatable)");
    app->add_option("--dataset", dataset, "Dataset directory");
    if (with_output) app->add_option("--out", output, "Output directory");
  }

  TrainConfig build() const {
    TrainConfig cfg = train_preset(preset);
    if (!config_file.empty()) {
      nlohmann::json j;
      std::ifstream in(config_file);
      if (!in) throw ConfigError("cannot open configuration " + config_file);
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(config_file + ": " + e.what());
      }
      cfg = train_config_from_json(j, cfg);
    }
    for (const auto& o : overrides) cfg = apply_override(cfg, o);
    if (!dataset.empty()) cfg.dataset = dataset;
    if (!output.empty()) cfg.output = output;
    validate(cfg);
    return cfg;
  }
};

void log_line(const std::string& s) { std::cerr << s << std::endl; }

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad seed '" + item + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("no seeds given");
  return seeds;
}

void print_metrics(const MetricsReport& m) {
  std::printf("UAR %.4f  WAR %.4f\n", m.uar, m.war);
  for (std::size_t c = 0; c < m.per_class_recall.size(); ++c) {
    std::printf("  class %zu: recall %.4f (%zu samples)\n", c, m.per_class_recall[c], m.class_support[c]);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IFDD: learnable lifting for static-dynamic feature disentanglement"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic planted-dynamics dataset");
  std::string gen_preset = "easy", gen_out;
  std::size_t gen_classes = 7, gen_clips = 840, gen_folds = 6;
  std::uint64_t gen_seed = 0;
  double gen_jitter = -1;
  gen->add_option("--preset", gen_preset, "easy or hard")->check(CLI::IsMember({"easy", "hard"}));
  gen->add_option("--classes", gen_classes, "Number of classes");
  gen->add_option("--clips", gen_clips, "Number of clips");
  gen->add_option("--seed", gen_seed, "Master seed");
  gen->add_option("--folds", gen_folds, "Folds recorded in the manifest");
  gen->add_option("--origin-jitter", gen_jitter, "Motif placement jitter in px (default from preset)");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train on a dataset (k-fold)");
  ConfigArgs tr_args;
  tr_args.attach(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_out;
  std::size_t ev_folds = 6, ev_fold = 0;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--dataset", ev_data, "Dataset directory")->required();
  ev->add_option("--split", ev_split, "train, val, test or all");
  ev->add_option("--folds", ev_folds, "Fold count used for training");
  ev->add_option("--fold", ev_fold, "Fold whose split is evaluated");
  ev->add_option("--out", ev_out, "Directory for metrics.csv and confidence.csv");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Run the ablation grid over seeds");
  ConfigArgs ab_args;
  ab_args.attach(ab);
  std::string ab_seeds = "0,1,2";
  std::vector<std::string> ab_variants;
  bool ab_no_baseline = false;
  ab->add_option("--seeds", ab_seeds, "Comma-separated seeds");
  ab->add_option("--variants", ab_variants, "Subset of variants to run (default: all twelve)");
  ab->add_flag("--no-baseline", ab_no_baseline, "Skip the frame-difference baseline");

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the full model loss (double precision)");
  ConfigArgs gc_args;
  gc_args.attach(gc, false);
  std::size_t gc_entries = 8, gc_label = 0;
  double gc_tol = 1e-4;
  std::uint64_t gc_seed = 0;
  gc->add_option("--entries", gc_entries, "Entries probed per parameter tensor");
  gc->add_option("--tolerance", gc_tol, "Maximum allowed relative error");
  gc->add_option("--seed", gc_seed, "Initialisation and input seed");
  gc->add_option("--label", gc_label, "Label used with a random input clip");

  // inspect-splits
  auto* is = app.add_subcommand("inspect-splits", "Dump the split indices of every clip as CSV");
  std::string is_ckpt, is_data, is_out = "splits.csv", is_split = "all";
  std::size_t is_folds = 6, is_fold = 0;
  is->add_option("--checkpoint", is_ckpt, "Checkpoint file")->required();
  is->add_option("--dataset", is_data, "Dataset directory")->required();
  is->add_option("--split", is_split, "train, val, test or all");
  is->add_option("--folds", is_folds, "Fold count used for training");
  is->add_option("--fold", is_fold, "Fold whose split is dumped");
  is->add_option("--out", is_out, "Output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      SynthConfig sc = synth_preset(gen_preset);
      sc.num_classes = gen_classes;
      sc.num_clips = gen_clips;
      sc.folds = gen_folds;
      if (gen_jitter >= 0) sc.origin_jitter = gen_jitter;
      const auto m = generate_dataset(sc, gen_seed, gen_out);
      std::printf("wrote %zu clips to %s\n", m.clips.size(), gen_out.c_str());
      std::printf("nearest-centroid oracle accuracy %.4f\n", m.oracle_accuracy);
      std::printf("frame mean p %.4f, frame variance p %.4f\n", m.mean_stat_min_p, m.var_stat_min_p);
    } else if (*tr) {
      const TrainConfig cfg = tr_args.build();
      const RunRecord run = train(cfg, log_line);
      for (const auto& f : run.folds) {
        std::printf("fold %zu: best epoch %zu, val WAR %.4f, test UAR %.4f WAR %.4f\n", f.fold, f.best_epoch, f.best_val_war,
                    f.test.metrics.uar, f.test.metrics.war);
      }
      std::printf("mean test UAR %.4f WAR %.4f (%.1f s), results in %s\n", run.mean_test_uar, run.mean_test_war,
                  run.wall_clock_seconds, cfg.output.c_str());
    } else if (*ev) {
      const ClipSet set = load_clip_set(ev_data);
      const auto idx = split_indices(set, ev_split, ev_folds, ev_fold);
      const EvalResult r = evaluate_checkpoint(ev_ckpt, set, idx);
      print_metrics(r.metrics);
      if (!ev_out.empty()) {
        detail::ensure_dir(ev_out);
        const std::size_t nc = r.metrics.per_class_recall.size();
        write_metrics_csv(std::filesystem::path(ev_out) / "metrics.csv", {{ev_split, r.metrics}}, nc);
        write_confidence_csv(std::filesystem::path(ev_out) / "confidence.csv", set, {{ev_fold, &r}}, nc);
      }
    } else if (*ab) {
      const TrainConfig cfg = ab_args.build();
      if (cfg.dataset.empty()) throw ConfigError("ablate needs --dataset");
      auto grid = default_ablation_grid();
      if (!ab_variants.empty()) {
        std::vector<AblationVariant> chosen;
        for (const auto& name : ab_variants) {
          auto it = std::find_if(grid.begin(), grid.end(), [&](const AblationVariant& v) { return v.name == name; });
          if (it == grid.end()) throw ConfigError("unknown variant '" + name + "'");
          chosen.push_back(*it);
        }
        grid = chosen;
      }
      const ClipSet set = load_clip_set(cfg.dataset);
      const auto res = run_ablation_suite(cfg, set, parse_seeds(ab_seeds), grid, !ab_no_baseline, log_line);
      for (const auto& s : res.summary) {
        std::printf("%-18s runs %zu  UAR %.4f ± %.4f  WAR %.4f ± %.4f\n", s.variant.c_str(), s.runs, s.uar_mean, s.uar_std,
                    s.war_mean, s.war_std);
      }
      std::printf("table written to %s/ablation.csv\n", cfg.output.c_str());
      for (const auto& r : res.rows)
        if (!r.ok) return 2;
    } else if (*gc) {
      const TrainConfig cfg = gc_args.build();
      Model<double> model(cfg.model, gc_seed);
      Tensor<double> clip;
      std::size_t label = gc_label;
      if (!cfg.dataset.empty()) {
        const ClipSet set = load_clip_set(cfg.dataset);
        check_compatible(cfg.model, set);
        clip = prepare_input<double>(set.clips.at(gc_seed % set.size()), false);
        label = set.labels[gc_seed % set.size()];
      } else {
        const auto& c = cfg.model.clip;
        clip = Tensor<double>({c.frames, c.height, c.width, c.channels});
        std::mt19937_64 rng(gc_seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (double& v : clip.data()) v = u(rng);
      }
      if (label >= cfg.model.head.num_classes) throw ConfigError("label outside [0, head.num_classes)");
      GradCheckOptions opt;
      opt.max_entries_per_param = gc_entries;
      opt.seed = gc_seed;
      const auto r = finite_diff_check([&] { return model.losses(model.forward(clip), label).total; }, model.params().entries(), opt);
      std::printf("checked %zu entries, max relative error %.3e at %s[%zu] (analytic %.6e, numeric %.6e)\n", r.checked,
                  r.max_rel_error, r.worst_param.c_str(), r.worst_index, r.worst_analytic, r.worst_numeric);
      if (!(r.max_rel_error <= gc_tol)) {
        std::printf("FAILED (tolerance %.1e)\n", gc_tol);
        return 2;
      }
      std::printf("passed (tolerance %.1e)\n", gc_tol);
    } else if (*is) {
      const ClipSet set = load_clip_set(is_data);
      inspect_splits(is_ckpt, set, split_indices(set, is_split, is_folds, is_fold), is_out);
      std::printf("wrote %s\n", is_out.c_str());
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
