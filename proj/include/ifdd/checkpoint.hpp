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

// Checkpoint files: "IFDDCKPT", u16 version, u32 length + model config JSON,
// u32 parameter count, then per parameter: u32 name length, name, u8 dtype
// (4 = f32, 8 = f64), u32 rank, u32 extents, little-endian values.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "ifdd/config.hpp"
#include "ifdd/data.hpp"
#include "ifdd/model.hpp"

namespace ifdd {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[8] = {'I', 'F', 'D', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

template <class T>
std::string encode_checkpoint(const Model<T>& model) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  std::string out(kCheckpointMagic, kCheckpointMagic + 8);
  detail::put_le<std::uint16_t>(out, kCheckpointVersion);
  const std::string cfg = to_json(model.config()).dump();
  detail::put_le<std::uint32_t>(out, std::uint32_t(cfg.size()));
  out += cfg;
  const auto& entries = model.params().entries();
  detail::put_le<std::uint32_t>(out, std::uint32_t(entries.size()));
  for (const auto& [name, var] : entries) {
    detail::put_le<std::uint32_t>(out, std::uint32_t(name.size()));
    out += name;
    out.push_back(char(sizeof(T)));
    const auto& shape = var.shape();
    detail::put_le<std::uint32_t>(out, std::uint32_t(shape.size()));
    for (auto d : shape) detail::put_le<std::uint32_t>(out, std::uint32_t(d));
    for (T v : var.value().data()) {
      if constexpr (sizeof(T) == 4) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        detail::put_le<std::uint32_t>(out, bits);
      } else {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        detail::put_le<std::uint64_t>(out, bits);
      }
    }
  }
  return out;
}

namespace detail {

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  const unsigned char* take(std::size_t n, const std::string& what) {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated while reading " + what);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_;
    pos_ += n;
    return p;
  }
  template <class U>
  U get(const std::string& what) {
    return get_le<U>(take(sizeof(U), what));
  }
  std::string str(std::size_t n, const std::string& what) {
    const auto* p = take(n, what);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Model configuration stored in a checkpoint.
inline ModelConfig checkpoint_config(const std::string& bytes) {
  detail::Reader r(bytes);
  if (bytes.size() < 8 || !std::equal(kCheckpointMagic, kCheckpointMagic + 8, bytes.begin())) {
    throw CheckpointError("bad magic, not an IFDDCKPT file");
  }
  r.take(8, "magic");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (this build reads version " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto len = r.get<std::uint32_t>("config length");
  try {
    return model_config_from_json(nlohmann::json::parse(r.str(len, "config")));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt config echo: ") + e.what());
  }
}

/// Loads parameter values into `model`. Every stored name must exist in the
/// model with the same shape, and every model parameter must be stored.
template <class T>
void decode_checkpoint_into(const std::string& bytes, Model<T>& model) {
  checkpoint_config(bytes);
  detail::Reader r(bytes);
  r.take(10, "header");
  r.take(r.get<std::uint32_t>("config length"), "config");
  const auto count = r.get<std::uint32_t>("parameter count");
  auto& store = model.params();
  std::vector<std::string> seen;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name = r.str(r.get<std::uint32_t>("parameter name length"), "parameter name");
    const auto dtype = r.get<std::uint8_t>("dtype of " + name);
    if (dtype != 4 && dtype != 8) throw CheckpointError("parameter '" + name + "': unknown dtype " + std::to_string(dtype));
    Shape shape(r.get<std::uint32_t>("rank of " + name));
    for (auto& d : shape) d = r.get<std::uint32_t>("shape of " + name);
    if (!store.contains(name)) throw CheckpointError("unknown parameter '" + name + "' in checkpoint");
    Var<T> p = store.get(name);
    if (shape != p.shape()) {
      throw CheckpointError("parameter '" + name + "': checkpoint shape " + to_string(shape) + " vs model shape " +
                            to_string(p.shape()));
    }
    Tensor<T>& dst = p.mutable_value();
    for (std::size_t i = 0; i < dst.numel(); ++i) {
      if (dtype == 4) {
        const auto bits = r.get<std::uint32_t>("values of " + name);
        float v;
        std::memcpy(&v, &bits, 4);
        dst[i] = T(v);
      } else {
        const auto bits = r.get<std::uint64_t>("values of " + name);
        double v;
        std::memcpy(&v, &bits, 8);
        dst[i] = T(v);
      }
    }
    seen.push_back(name);
  }
  if (!r.done()) throw CheckpointError("trailing bytes after the last parameter");
  for (const auto& [name, _] : store.entries()) {
    if (std::find(seen.begin(), seen.end(), name) == seen.end()) {
      throw CheckpointError("parameter '" + name + "' missing from checkpoint");
    }
  }
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model) {
  detail::write_file(path, encode_checkpoint(model));
}

template <class T>
void load_checkpoint_into(const std::filesystem::path& path, Model<T>& model) {
  decode_checkpoint_into(detail::read_file(path), model);
}

}  // namespace ifdd
