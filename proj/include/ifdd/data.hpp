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

// Synthetic planted-dynamics clips.
//
// Each clip is a static smooth texture (optionally translated by a global
// sub-pixel drift), plus pixel noise, plus one short event: a P×P patch that
// appears for D frames, moves in a class-specific direction and modulates its
// intensity with a class-specific zero-mean waveform. Outside the event the
// frames carry no class information, and all waveforms share mean and energy,
// so per-frame intensity statistics do not separate the classes.
//
// Clip files: "IFDDCLIP", u16 version, u32 T, H, W, C, then little-endian
// float32 values in row-major (T, H, W, C) order.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "ifdd/tensor.hpp"

namespace ifdd {

/// Malformed or inconsistent dataset files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthConfig {
  std::string preset = "easy";
  std::size_t num_classes = 7;
  std::size_t num_clips = 840;
  std::size_t frames = 16;
  std::size_t height = 32;
  std::size_t width = 32;
  double noise_sigma = 0.02;
  double max_drift = 0.0;  // px/frame, whole-frame translation
  std::size_t event_length = 6;
  std::size_t patch_size = 8;
  double motif_speed = 3.0;  // px/frame, direction keyed to the class
  double motif_amplitude = 0.4;
  double motif_contrast = 0.25;  // mean patch brightness above mid-grey
  double origin_jitter = 2.0;  // px around the centred trajectory
  std::size_t folds = 6;
};

inline SynthConfig synth_preset(const std::string& name) {
  SynthConfig c;
  c.preset = name;
  if (name == "easy") {
    c.noise_sigma = 0.02;
    c.max_drift = 0.0;
    c.event_length = 6;
  } else if (name == "hard") {
    c.noise_sigma = 0.1;
    c.max_drift = 1.0;
    c.event_length = 4;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "' (expected easy or hard)");
  }
  return c;
}

inline void validate(const SynthConfig& c) {
  if (c.num_classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (c.num_clips < c.num_classes) throw std::invalid_argument("need at least one clip per class");
  if (c.event_length < 2 || c.event_length > c.frames) throw std::invalid_argument("event length must fit in the clip");
  if (c.patch_size == 0 || c.patch_size >= std::min(c.height, c.width)) throw std::invalid_argument("patch must fit in the frame");
  if (c.noise_sigma < 0 || c.max_drift < 0) throw std::invalid_argument("nuisance magnitudes must be non-negative");
  const double travel = (c.motif_speed + c.max_drift) * double(c.event_length - 1);
  if (travel + double(c.patch_size) >= double(std::min(c.height, c.width))) {
    throw std::invalid_argument("motif trajectory does not fit in the frame");
  }
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t clip_seed(std::uint64_t master_seed, std::size_t index) {
  return splitmix64(master_seed ^ splitmix64(std::uint64_t(index) + 1));
}

namespace detail {

inline std::vector<double> zero_mean_unit_rms(std::vector<double> w) {
  double mean = 0;
  for (double v : w) mean += v;
  mean /= double(w.size());
  double rms = 0;
  for (double& v : w) {
    v -= mean;
    rms += v * v;
  }
  rms = std::sqrt(rms / double(w.size()));
  if (rms < 1e-12) return {};
  for (double& v : w) v /= rms;
  return w;
}

}  // namespace detail

/// Zero-mean intensity waveform of class c over an event of length D:
/// sin(π(c+1)τ/D) with its mean removed, scaled to unit RMS. Classes c+1 and
/// 2D−(c+1) sample to opposite signs; c+1 = D samples to zero and falls back
/// to an alternating pattern.
inline std::vector<double> class_waveform(std::size_t c, std::size_t d) {
  std::vector<double> w(d);
  for (std::size_t tau = 0; tau < d; ++tau) {
    w[tau] = std::sin(std::numbers::pi * double(c + 1) * double(tau) / double(d));
  }
  auto out = detail::zero_mean_unit_rms(w);
  if (out.empty()) {
    for (std::size_t tau = 0; tau < d; ++tau) w[tau] = (tau % 2 == 0) ? 1.0 : -1.0;
    out = detail::zero_mean_unit_rms(w);
  }
  return out;
}

/// Unit direction of motion for class c of n.
inline std::array<double, 2> class_direction(std::size_t c, std::size_t n) {
  const double a = 2.0 * std::numbers::pi * double(c) / double(n);
  return {std::cos(a), std::sin(a)};  // (dy, dx)
}

struct SyntheticClip {
  Tensor<float> frames;  // (T, H, W, 3) in [0, 1]
  std::size_t label = 0;
  std::uint64_t seed = 0;
  std::size_t event_start = 0;
  std::size_t event_length = 0;
  std::array<double, 2> drift{0, 0};   // (vy, vx) px/frame
  std::array<double, 2> origin{0, 0};  // patch top-left at the first event frame
};

namespace detail {

inline double bilinear(const std::vector<double>& img, std::size_t h, std::size_t w, double y, double x) {
  y = std::clamp(y, 0.0, double(h - 1));
  x = std::clamp(x, 0.0, double(w - 1));
  const std::size_t y0 = std::min(std::size_t(y), h - 2), x0 = std::min(std::size_t(x), w - 2);
  const double fy = y - double(y0), fx = x - double(x0);
  auto at = [&](std::size_t yy, std::size_t xx) { return img[yy * w + xx]; };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) + fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

/// Overlap of the unit pixel [i, i+1) with the interval [a, a+len).
inline double coverage(double i, double a, double len) {
  return std::max(0.0, std::min(i + 1.0, a + len) - std::max(i, a));
}

}  // namespace detail

/// Renders one clip. When `background` is non-null it receives the same clip
/// rendered without the event and without noise.
inline SyntheticClip render_clip(const SynthConfig& cfg, std::size_t label, std::uint64_t seed,
                                 Tensor<float>* background = nullptr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t t_n = cfg.frames, h = cfg.height, w = cfg.width, ch = 3;

  SyntheticClip clip;
  clip.label = label;
  clip.seed = seed;
  clip.event_length = cfg.event_length;

  // Texture canvas with a margin that covers the largest drift.
  const std::size_t margin = std::size_t(std::ceil(cfg.max_drift * double(t_n))) + 2;
  const std::size_t ch_h = h + 2 * margin, ch_w = w + 2 * margin;
  std::vector<std::vector<double>> canvas(ch, std::vector<double>(ch_h * ch_w, 0.5));
  for (std::size_t c = 0; c < ch; ++c) {
    for (int k = 0; k < 4; ++k) {
      const double fy = (1.0 + 3.0 * unif(rng)) / 32.0, fx = (1.0 + 3.0 * unif(rng)) / 32.0;
      const double sy = unif(rng) < 0.5 ? -1.0 : 1.0;
      const double phase = 2.0 * std::numbers::pi * unif(rng);
      const double amp = 0.06 * (0.5 + unif(rng));
      for (std::size_t y = 0; y < ch_h; ++y)
        for (std::size_t x = 0; x < ch_w; ++x)
          canvas[c][y * ch_w + x] += amp * std::sin(2.0 * std::numbers::pi * (sy * fy * double(y) + fx * double(x)) + phase);
    }
  }

  const double speed = cfg.max_drift * unif(rng);
  const double drift_angle = 2.0 * std::numbers::pi * unif(rng);
  clip.drift = {speed * std::sin(drift_angle), speed * std::cos(drift_angle)};

  clip.event_start = std::size_t(unif(rng) * double(t_n - cfg.event_length + 1));
  clip.event_start = std::min(clip.event_start, t_n - cfg.event_length);
  const auto dir = class_direction(label, cfg.num_classes);
  const auto wave = class_waveform(label, cfg.event_length);

  // Trajectory centred in the frame, jittered, and kept inside it.
  const double p = double(cfg.patch_size);
  std::array<double, 2> lo{0, 0}, hi{0, 0};
  for (std::size_t tau = 0; tau < cfg.event_length; ++tau) {
    for (int a = 0; a < 2; ++a) {
      const double disp = dir[a] * cfg.motif_speed * double(tau) + clip.drift[a] * double(tau);
      lo[a] = std::min(lo[a], disp);
      hi[a] = std::max(hi[a], disp);
    }
  }
  const double extent[2] = {double(h), double(w)};
  for (int a = 0; a < 2; ++a) {
    const double min_o = -lo[a], max_o = extent[a] - p - hi[a];
    const double centre = 0.5 * (min_o + max_o);
    clip.origin[a] = std::clamp(centre + cfg.origin_jitter * (2.0 * unif(rng) - 1.0), min_o, std::max(min_o, max_o));
  }

  clip.frames = Tensor<float>({t_n, h, w, ch});
  if (background) *background = Tensor<float>({t_n, h, w, ch});
  for (std::size_t t = 0; t < t_n; ++t) {
    const double oy = clip.drift[0] * double(t), ox = clip.drift[1] * double(t);
    const bool in_event = t >= clip.event_start && t < clip.event_start + cfg.event_length;
    const std::size_t tau = t - clip.event_start;
    double py = 0, px = 0, intensity = 0;
    if (in_event) {
      py = clip.origin[0] + dir[0] * cfg.motif_speed * double(tau) + clip.drift[0] * double(tau);
      px = clip.origin[1] + dir[1] * cfg.motif_speed * double(tau) + clip.drift[1] * double(tau);
      intensity = 0.5 + cfg.motif_contrast + cfg.motif_amplitude * 0.5 * wave[tau];
    }
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double cov = in_event ? detail::coverage(double(y), py, p) * detail::coverage(double(x), px, p) : 0.0;
        for (std::size_t c = 0; c < ch; ++c) {
          const double base =
              detail::bilinear(canvas[c], ch_h, ch_w, double(y + margin) - oy, double(x + margin) - ox);
          const std::size_t i = ((t * h + y) * w + x) * ch + c;
          if (background) (*background)[i] = float(base);
          double v = (1.0 - cov) * base + cov * intensity;
          if (cfg.noise_sigma > 0) v += cfg.noise_sigma * gauss(rng);
          clip.frames[i] = float(std::clamp(v, 0.0, 1.0));
        }
      }
  }
  return clip;
}

// ---------------------------------------------------------------------------
// Clip files
// ---------------------------------------------------------------------------

inline constexpr char kClipMagic[8] = {'I', 'F', 'D', 'D', 'C', 'L', 'I', 'P'};
inline constexpr std::uint16_t kClipVersion = 1;

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(char((std::uint64_t(v) >> (8 * i)) & 0xff));
}

template <class U>
U get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return U(v);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace detail

inline std::string encode_clip(const Tensor<float>& frames) {
  if (frames.rank() != 4) throw DataError("clip must be rank 4 (T,H,W,C)");
  std::string out(kClipMagic, kClipMagic + 8);
  detail::put_le<std::uint16_t>(out, kClipVersion);
  for (std::size_t d = 0; d < 4; ++d) detail::put_le<std::uint32_t>(out, std::uint32_t(frames.dim(d)));
  out.reserve(out.size() + 4 * frames.numel());
  for (float v : frames.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    detail::put_le<std::uint32_t>(out, bits);
  }
  return out;
}

inline Tensor<float> decode_clip(const std::string& bytes, const std::string& origin = "clip") {
  constexpr std::size_t header = 8 + 2 + 16;
  if (bytes.size() < header) throw DataError(origin + ": truncated header (" + std::to_string(bytes.size()) + " bytes)");
  if (!std::equal(kClipMagic, kClipMagic + 8, bytes.begin())) throw DataError(origin + ": bad magic, not an IFDDCLIP file");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const auto version = detail::get_le<std::uint16_t>(p + 8);
  if (version != kClipVersion) throw DataError(origin + ": unsupported clip format version " + std::to_string(version));
  Shape shape(4);
  for (std::size_t d = 0; d < 4; ++d) {
    shape[d] = detail::get_le<std::uint32_t>(p + 10 + 4 * d);
    if (shape[d] == 0) throw DataError(origin + ": zero extent in header");
  }
  const std::size_t n = numel(shape);
  if (bytes.size() != header + 4 * n) {
    throw DataError(origin + ": payload is " + std::to_string(bytes.size() - header) + " bytes, shape " + to_string(shape) +
                    " needs " + std::to_string(4 * n));
  }
  Tensor<float> t(shape);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = detail::get_le<std::uint32_t>(p + header + 4 * i);
    std::memcpy(&t[i], &bits, 4);
  }
  return t;
}

inline void write_clip(const std::filesystem::path& path, const Tensor<float>& frames) {
  detail::write_file(path, encode_clip(frames));
}

/// Reads a clip file; when `expected` is non-empty the stored shape must match.
inline Tensor<float> load_clip(const std::filesystem::path& path, const Shape& expected = {}) {
  Tensor<float> t = decode_clip(detail::read_file(path), path.string());
  if (!expected.empty() && t.shape() != expected) {
    throw DataError(path.string() + ": file shape " + to_string(t.shape()) + " disagrees with manifest shape " +
                    to_string(expected));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Manifest, folds, generation
// ---------------------------------------------------------------------------

struct ClipEntry {
  std::string file;
  std::size_t label = 0;
  std::uint64_t seed = 0;
  std::size_t event_start = 0;
  std::size_t event_length = 0;
  std::array<double, 2> drift{0, 0};
};

struct DatasetManifest {
  int version = 1;
  std::size_t num_classes = 0;
  Shape clip_shape;
  SynthConfig generator;
  std::uint64_t master_seed = 0;
  std::vector<ClipEntry> clips;
  std::vector<std::size_t> fold_of;  // default stratified fold per clip
  std::size_t folds = 0;
  std::uint64_t fold_seed = 0;
  double oracle_accuracy = -1;  // nearest-centroid on ground-truth event windows
  double mean_stat_min_p = -1;  // frame-mean two-sample test, min over classes
  double var_stat_min_p = -1;   // frame-variance two-sample test, min over classes

  std::vector<std::size_t> labels() const {
    std::vector<std::size_t> l;
    for (const auto& c : clips) l.push_back(c.label);
    return l;
  }
};

inline constexpr int kManifestVersion = 1;

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"preset", c.preset},           {"num_classes", c.num_classes},   {"num_clips", c.num_clips},
          {"frames", c.frames},           {"height", c.height},             {"width", c.width},
          {"noise_sigma", c.noise_sigma}, {"max_drift", c.max_drift},       {"event_length", c.event_length},
          {"patch_size", c.patch_size},   {"motif_speed", c.motif_speed},   {"motif_amplitude", c.motif_amplitude},
          {"motif_contrast", c.motif_contrast},
          {"origin_jitter", c.origin_jitter}, {"folds", c.folds}};
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.preset = j.at("preset").get<std::string>();
  c.num_classes = j.at("num_classes");
  c.num_clips = j.at("num_clips");
  c.frames = j.at("frames");
  c.height = j.at("height");
  c.width = j.at("width");
  c.noise_sigma = j.at("noise_sigma");
  c.max_drift = j.at("max_drift");
  c.event_length = j.at("event_length");
  c.patch_size = j.at("patch_size");
  c.motif_speed = j.at("motif_speed");
  c.motif_amplitude = j.at("motif_amplitude");
  c.motif_contrast = j.at("motif_contrast");
  c.origin_jitter = j.at("origin_jitter");
  c.folds = j.at("folds");
  return c;
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json clips = nlohmann::json::array();
  for (const auto& c : m.clips) {
    clips.push_back({{"file", c.file},
                     {"label", c.label},
                     {"seed", c.seed},
                     {"event_start", c.event_start},
                     {"event_length", c.event_length},
                     {"drift", {c.drift[0], c.drift[1]}}});
  }
  return {{"format", "ifdd-synthetic-dataset"},
          {"version", m.version},
          {"num_classes", m.num_classes},
          {"num_clips", m.clips.size()},
          {"clip_shape", m.clip_shape},
          {"master_seed", m.master_seed},
          {"generator", to_json(m.generator)},
          {"checks",
           {{"nearest_centroid_oracle_accuracy", m.oracle_accuracy},
            {"frame_mean_min_p", m.mean_stat_min_p},
            {"frame_variance_min_p", m.var_stat_min_p}}},
          {"folds", {{"k", m.folds}, {"seed", m.fold_seed}, {"assignment", m.fold_of}}},
          {"clips", clips}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.version = j.at("version");
    if (m.version != kManifestVersion) throw DataError("unsupported manifest version " + std::to_string(m.version));
    m.num_classes = j.at("num_classes");
    m.clip_shape = j.at("clip_shape").get<Shape>();
    m.master_seed = j.at("master_seed");
    m.generator = synth_config_from_json(j.at("generator"));
    const auto& checks = j.at("checks");
    m.oracle_accuracy = checks.at("nearest_centroid_oracle_accuracy");
    m.mean_stat_min_p = checks.at("frame_mean_min_p");
    m.var_stat_min_p = checks.at("frame_variance_min_p");
    m.folds = j.at("folds").at("k");
    m.fold_seed = j.at("folds").at("seed");
    m.fold_of = j.at("folds").at("assignment").get<std::vector<std::size_t>>();
    for (const auto& c : j.at("clips")) {
      ClipEntry e;
      e.file = c.at("file");
      e.label = c.at("label");
      e.seed = c.at("seed");
      e.event_start = c.at("event_start");
      e.event_length = c.at("event_length");
      e.drift = {c.at("drift").at(0).get<double>(), c.at("drift").at(1).get<double>()};
      if (e.label >= m.num_classes) throw DataError("clip " + e.file + " has label outside [0, num_classes)");
      m.clips.push_back(e);
    }
    if (j.at("num_clips").get<std::size_t>() != m.clips.size()) throw DataError("num_clips disagrees with clip list");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

struct FoldSplit {
  std::vector<std::size_t> train, val, test;
};

/// Stratified k-fold assignment: within each class, clips are shuffled and
/// dealt round-robin to folds. Returns the fold of every clip.
inline std::vector<std::size_t> stratified_folds(const std::vector<std::size_t>& labels, std::size_t num_classes,
                                                 std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k-fold needs k >= 2");
  if (labels.size() < k) throw std::invalid_argument("fewer clips than folds");
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(labels[i]).push_back(i);
  std::vector<std::size_t> fold(labels.size(), 0);
  std::mt19937_64 rng(seed);
  std::size_t offset = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    if (members.size() < k) {
      throw std::invalid_argument("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                                  " clips, fewer than k = " + std::to_string(k));
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i = 0; i < members.size(); ++i) fold[members[i]] = (offset + i) % k;
    offset += members.size();
  }
  return fold;
}

/// Test set = clips of fold `f`; the rest is split 4:1 into train/validation
/// per class, deterministically in `seed`.
inline FoldSplit fold_split(const std::vector<std::size_t>& labels, std::size_t num_classes,
                            const std::vector<std::size_t>& fold_of, std::size_t f, std::uint64_t seed) {
  FoldSplit s;
  std::vector<std::vector<std::size_t>> rest(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (fold_of[i] == f) s.test.push_back(i);
    else rest[labels[i]].push_back(i);
  }
  std::mt19937_64 rng(splitmix64(seed ^ (0x51ed2701ULL + f)));
  for (auto& members : rest) {
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t n_val = members.size() / 5;
    s.val.insert(s.val.end(), members.begin(), members.begin() + std::ptrdiff_t(n_val));
    s.train.insert(s.train.end(), members.begin() + std::ptrdiff_t(n_val), members.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

inline std::vector<FoldSplit> kfold_split(const DatasetManifest& m, std::size_t k, std::uint64_t seed) {
  const auto labels = m.labels();
  const auto fold_of = stratified_folds(labels, m.num_classes, k, seed);
  std::vector<FoldSplit> out;
  for (std::size_t f = 0; f < k; ++f) out.push_back(fold_split(labels, m.num_classes, fold_of, f, seed));
  return out;
}

namespace detail {

/// Channel-mean residual of the event window against the noiseless
/// background, cropped on a box anchored at the motif origin.
inline std::vector<double> oracle_features(const SyntheticClip& clip, const Tensor<float>& background,
                                           const SynthConfig& cfg) {
  const std::size_t h = cfg.height, w = cfg.width;
  const std::size_t reach = std::size_t(std::ceil((cfg.motif_speed + cfg.max_drift) * double(cfg.event_length - 1))) + 1;
  const std::size_t box = cfg.patch_size + 2 * reach;
  std::vector<double> f(cfg.event_length * box * box, 0.0);
  const long y0 = long(std::floor(clip.origin[0])) - long(reach);
  const long x0 = long(std::floor(clip.origin[1])) - long(reach);
  for (std::size_t tau = 0; tau < cfg.event_length; ++tau) {
    const std::size_t t = clip.event_start + tau;
    for (std::size_t by = 0; by < box; ++by)
      for (std::size_t bx = 0; bx < box; ++bx) {
        const long y = y0 + long(by), x = x0 + long(bx);
        if (y < 0 || x < 0 || y >= long(h) || x >= long(w)) continue;
        double acc = 0;
        for (std::size_t c = 0; c < 3; ++c) {
          const std::size_t i = ((t * h + std::size_t(y)) * w + std::size_t(x)) * 3 + c;
          acc += clip.frames[i] - background[i];
        }
        f[(tau * box + by) * box + bx] = acc / 3.0;
      }
  }
  return f;
}

/// Bonferroni-adjusted smallest two-sided Welch p-value of "class c vs the
/// rest" over classes.
inline double min_class_p_value(const std::vector<double>& values, const std::vector<std::size_t>& labels,
                                std::size_t num_classes) {
  double min_p = 1.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    double s1 = 0, s2 = 0, q1 = 0, q2 = 0;
    std::size_t n1 = 0, n2 = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (labels[i] == c) {
        s1 += values[i];
        q1 += values[i] * values[i];
        ++n1;
      } else {
        s2 += values[i];
        q2 += values[i] * values[i];
        ++n2;
      }
    }
    if (n1 < 2 || n2 < 2) continue;
    const double m1 = s1 / double(n1), m2 = s2 / double(n2);
    const double v1 = std::max(0.0, (q1 - double(n1) * m1 * m1) / double(n1 - 1));
    const double v2 = std::max(0.0, (q2 - double(n2) * m2 * m2) / double(n2 - 1));
    const double se2 = v1 / double(n1) + v2 / double(n2);
    if (se2 <= 0) continue;
    const double tstat = (m1 - m2) / std::sqrt(se2);
    const double dof = se2 * se2 / ((v1 / n1) * (v1 / n1) / double(n1 - 1) + (v2 / n2) * (v2 / n2) / double(n2 - 1));
    boost::math::students_t dist(dof);
    const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(tstat)));
    min_p = std::min(min_p, p);
  }
  return std::min(1.0, min_p * double(num_classes));
}

}  // namespace detail

inline std::string clip_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip_%05zu.bin", index);
  return buf;
}

/// Writes `num_clips` balanced clips plus manifest.json into `out_dir`.
/// Clip i has label i mod N_C and seed hash(master_seed, i).
inline DatasetManifest generate_dataset(const SynthConfig& cfg, std::uint64_t master_seed,
                                        const std::filesystem::path& out_dir) {
  validate(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) throw DataError("cannot create output directory " + out_dir.string());

  DatasetManifest m;
  m.version = kManifestVersion;
  m.num_classes = cfg.num_classes;
  m.clip_shape = {cfg.frames, cfg.height, cfg.width, 3};
  m.generator = cfg;
  m.master_seed = master_seed;

  std::vector<std::vector<double>> features;
  std::vector<double> frame_means, frame_vars;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < cfg.num_clips; ++i) {
    const std::size_t label = i % cfg.num_classes;
    Tensor<float> background;
    const SyntheticClip clip = render_clip(cfg, label, clip_seed(master_seed, i), &background);
    const std::string name = clip_file_name(i);
    write_clip(out_dir / name, clip.frames);
    m.clips.push_back({name, label, clip.seed, clip.event_start, clip.event_length, clip.drift});
    labels.push_back(label);
    features.push_back(detail::oracle_features(clip, background, cfg));

    const std::size_t frame = cfg.height * cfg.width * 3;
    double mean_acc = 0, var_acc = 0;
    for (std::size_t t = 0; t < cfg.frames; ++t) {
      double s = 0, q = 0;
      for (std::size_t e = 0; e < frame; ++e) {
        const double v = clip.frames[t * frame + e];
        s += v;
        q += v * v;
      }
      const double mu = s / double(frame);
      mean_acc += mu;
      var_acc += q / double(frame) - mu * mu;
    }
    frame_means.push_back(mean_acc / double(cfg.frames));
    frame_vars.push_back(var_acc / double(cfg.frames));
  }

  // Nearest-centroid separability certificate on the ground-truth windows.
  const std::size_t dim = features.front().size();
  std::vector<std::vector<double>> centroid(cfg.num_classes, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> count(cfg.num_classes, 0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) centroid[labels[i]][d] += features[i][d];
    ++count[labels[i]];
  }
  for (std::size_t c = 0; c < cfg.num_classes; ++c)
    for (double& v : centroid[c]) v /= double(std::max<std::size_t>(count[c], 1));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
      double d2 = 0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = features[i][d] - centroid[c][d];
        d2 += diff * diff;
      }
      if (d2 < best_d) {
        best_d = d2;
        best = c;
      }
    }
    correct += best == labels[i];
  }
  m.oracle_accuracy = double(correct) / double(features.size());
  m.mean_stat_min_p = detail::min_class_p_value(frame_means, labels, cfg.num_classes);
  m.var_stat_min_p = detail::min_class_p_value(frame_vars, labels, cfg.num_classes);

  m.folds = cfg.folds;
  m.fold_seed = master_seed;
  m.fold_of = stratified_folds(labels, cfg.num_classes, cfg.folds, master_seed);

  detail::write_file(out_dir / "manifest.json", to_json(m).dump(2) + "\n");
  return m;
}

}  // namespace ifdd
