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

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ifdd/model.hpp"
#include "ifdd/optim.hpp"

namespace ifdd {

/// Invalid or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
  std::string dataset;
  std::string output = "run";
  ModelConfig model;
  std::size_t epochs = 50;
  std::size_t warmup_epochs = 10;
  double base_lr = 1e-4;
  double warmup_lr = 1e-6;
  double weight_decay = 1e-3;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::string precision = "float";  // float | double
  std::size_t folds = 6;
  long fold = -1;  // -1 runs every fold
  bool flip = false;
  bool grad_check = true;
  double grad_check_tolerance = 1e-4;
  std::size_t grad_check_entries = 6;

  ScheduleConfig schedule() const { return {epochs, warmup_epochs, base_lr, warmup_lr}; }
  AdamWConfig optimizer() const {
    AdamWConfig a;
    a.weight_decay = weight_decay;
    return a;
  }
};

/// Named presets: "paper" is the full 100-epoch schedule at lr 1e-4,
/// "toy" shortens training for the desk-scale synthetic sets.
inline TrainConfig train_preset(const std::string& name) {
  TrainConfig c;
  if (name == "paper") {
    c.epochs = 100;
    c.warmup_epochs = 10;
    c.base_lr = 1e-4;
  } else if (name == "toy") {
    c.epochs = 50;
    c.warmup_epochs = 5;
    c.base_lr = 1e-3;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected paper or toy)");
  }
  return c;
}

inline void validate(const TrainConfig& c) {
  if (c.epochs > 0 && c.warmup_epochs >= c.epochs) throw ConfigError("warmup_epochs must be smaller than epochs");
  if (!(c.base_lr > 0) || !(c.warmup_lr > 0)) throw ConfigError("learning rates must be positive");
  if (c.weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (c.precision != "float" && c.precision != "double") throw ConfigError("precision must be float or double");
  if (c.folds < 2) throw ConfigError("folds must be at least 2");
  if (c.fold >= long(c.folds) || c.fold < -1) throw ConfigError("fold must be -1 or in [0, folds)");
  if (!(c.model.loss.huber_delta > 0)) throw ConfigError("loss.huber_delta must be positive");
  if (c.model.head.num_classes < 2) throw ConfigError("head.num_classes must be at least 2");
  latent_shape(c.model.clip, c.model.backbone);
}

inline nlohmann::json to_json(const ModelConfig& m) {
  return {{"clip", {{"frames", m.clip.frames}, {"height", m.clip.height}, {"width", m.clip.width}, {"channels", m.clip.channels}}},
          {"backbone",
           {{"stem_stride", m.backbone.stem_stride},
            {"temporal_fold", m.backbone.temporal_fold},
            {"channels", m.backbone.channels},
            {"dilation", m.backbone.dilation},
            {"fuse_channels", m.backbone.fuse_channels}}},
          {"issm",
           {{"d_t", m.issm.d_t},
            {"dc", m.issm.dc},
            {"range_l", m.issm.range_l},
            {"init_mode", to_string(m.issm.init_mode)},
            {"variant", to_string(m.issm.variant)},
            {"ln_eps", m.issm.ln_eps}}},
          {"ladm",
           {{"enabled", m.ladm.enabled},
            {"order", to_string(m.ladm.order)},
            {"mlp_hidden", m.ladm.mlp_hidden},
            {"norm", to_string(m.ladm.norm)},
            {"ln_eps", m.ladm.ln_eps}}},
          {"loss",
           {{"huber_delta", m.loss.huber_delta},
            {"constrained_dims", to_string(m.loss.constrained_dims)},
            {"lift_weight", m.loss.lift_weight}}},
          {"head", {{"hidden", m.head.hidden}, {"num_classes", m.head.num_classes}}}};
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"dataset", c.dataset},
          {"output", c.output},
          {"model", to_json(c.model)},
          {"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"base_lr", c.base_lr},
          {"warmup_lr", c.warmup_lr},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"precision", c.precision},
          {"folds", c.folds},
          {"fold", c.fold},
          {"flip", c.flip},
          {"grad_check", c.grad_check},
          {"grad_check_tolerance", c.grad_check_tolerance},
          {"grad_check_entries", c.grad_check_entries}};
}

namespace detail {

/// Splits "a.b.c" into its components.
inline std::vector<std::string> split_key(const std::string& key) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    parts.push_back(key.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return parts;
}

/// Interprets an override value: JSON literal when it parses, plain string otherwise.
inline nlohmann::json parse_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    return text;
  }
}

template <class V>
void read_opt(const nlohmann::json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

}  // namespace detail

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  if (j.contains("clip")) {
    const auto& c = j.at("clip");
    detail::read_opt(c, "frames", m.clip.frames);
    detail::read_opt(c, "height", m.clip.height);
    detail::read_opt(c, "width", m.clip.width);
    detail::read_opt(c, "channels", m.clip.channels);
  }
  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    detail::read_opt(b, "stem_stride", m.backbone.stem_stride);
    detail::read_opt(b, "temporal_fold", m.backbone.temporal_fold);
    detail::read_opt(b, "channels", m.backbone.channels);
    detail::read_opt(b, "dilation", m.backbone.dilation);
    detail::read_opt(b, "fuse_channels", m.backbone.fuse_channels);
  }
  if (j.contains("issm")) {
    const auto& s = j.at("issm");
    detail::read_opt(s, "d_t", m.issm.d_t);
    detail::read_opt(s, "dc", m.issm.dc);
    if (s.contains("range_l")) {
      const auto& r = s.at("range_l");
      m.issm.range_l = r.is_string() ? r.get<std::string>() : nlohmann::json(r.get<double>()).dump();
    }
    if (s.contains("init_mode")) m.issm.init_mode = parse_init_mode(s.at("init_mode"));
    if (s.contains("variant")) m.issm.variant = parse_split_variant(s.at("variant"));
    detail::read_opt(s, "ln_eps", m.issm.ln_eps);
  }
  if (j.contains("ladm")) {
    const auto& l = j.at("ladm");
    detail::read_opt(l, "enabled", m.ladm.enabled);
    if (l.contains("order")) m.ladm.order = parse_lift_order(l.at("order"));
    detail::read_opt(l, "mlp_hidden", m.ladm.mlp_hidden);
    if (l.contains("norm")) m.ladm.norm = parse_norm_position(l.at("norm"));
    detail::read_opt(l, "ln_eps", m.ladm.ln_eps);
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    detail::read_opt(l, "huber_delta", m.loss.huber_delta);
    if (l.contains("constrained_dims")) m.loss.constrained_dims = parse_constrained_dims(l.at("constrained_dims"));
    detail::read_opt(l, "lift_weight", m.loss.lift_weight);
  }
  if (j.contains("head")) {
    const auto& h = j.at("head");
    detail::read_opt(h, "hidden", m.head.hidden);
    detail::read_opt(h, "num_classes", m.head.num_classes);
  }
  return m;
}

/// Reads a configuration object on top of `base`; absent keys keep their values.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  static const std::vector<std::string> known = {
      "preset",        "dataset", "output",    "model",  "epochs", "warmup_epochs", "base_lr",
      "warmup_lr",     "weight_decay", "batch_size", "seed", "precision", "folds", "fold",
      "flip",          "grad_check",   "grad_check_tolerance", "grad_check_entries"};
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown configuration key '" + k + "'");
  }
  try {
    if (j.contains("preset")) c = train_preset(j.at("preset"));
    detail::read_opt(j, "dataset", c.dataset);
    detail::read_opt(j, "output", c.output);
    if (j.contains("model")) {
      nlohmann::json base = to_json(c.model);
      base.merge_patch(j.at("model"));
      c.model = model_config_from_json(base);
    }
    detail::read_opt(j, "epochs", c.epochs);
    detail::read_opt(j, "warmup_epochs", c.warmup_epochs);
    detail::read_opt(j, "base_lr", c.base_lr);
    detail::read_opt(j, "warmup_lr", c.warmup_lr);
    detail::read_opt(j, "weight_decay", c.weight_decay);
    detail::read_opt(j, "batch_size", c.batch_size);
    detail::read_opt(j, "seed", c.seed);
    detail::read_opt(j, "precision", c.precision);
    detail::read_opt(j, "folds", c.folds);
    detail::read_opt(j, "fold", c.fold);
    detail::read_opt(j, "flip", c.flip);
    detail::read_opt(j, "grad_check", c.grad_check);
    detail::read_opt(j, "grad_check_tolerance", c.grad_check_tolerance);
    detail::read_opt(j, "grad_check_entries", c.grad_check_entries);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad configuration value: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

/// Applies one `key=value` override, e.g. `issm.variant=even_odd` or
/// `epochs=20`. Model keys may omit the leading "model.".
inline TrainConfig apply_override(const TrainConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  std::string key = assignment.substr(0, eq);
  const nlohmann::json value = detail::parse_value(assignment.substr(eq + 1));
  static const std::vector<std::string> model_sections = {"clip", "backbone", "issm", "ladm", "loss", "head"};
  auto parts = detail::split_key(key);
  if (std::find(model_sections.begin(), model_sections.end(), parts.front()) != model_sections.end()) {
    parts.insert(parts.begin(), "model");
  }
  nlohmann::json j = to_json(c);
  nlohmann::json* node = &j;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i])) throw ConfigError("unknown configuration key '" + key + "'");
    node = &(*node)[parts[i]];
  }
  if (!node->is_object() || !node->contains(parts.back())) throw ConfigError("unknown configuration key '" + key + "'");
  nlohmann::json& slot = (*node)[parts.back()];
  nlohmann::json v = value;
  if (slot.is_string() && !v.is_string()) v = assignment.substr(eq + 1);
  if (slot.is_number() && !v.is_number()) throw ConfigError("override '" + key + "' expects a number");
  if (slot.is_boolean() && !v.is_boolean()) throw ConfigError("override '" + key + "' expects true or false");
  if (slot.is_array() && !v.is_array()) throw ConfigError("override '" + key + "' expects a list");
  slot = v;
  return train_config_from_json(j);
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return train_config_from_json(j);
}

}  // namespace ifdd
