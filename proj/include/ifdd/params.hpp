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

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ifdd/autodiff.hpp"
#include "ifdd/tensor.hpp"

namespace ifdd {

/// Named, ordered registry of trainable tensors. Registration order is the
/// serialization order of checkpoints and the iteration order of optimizers.
template <class T>
class ParamStore {
 public:
  using Entry = std::pair<std::string, Var<T>>;

  Var<T> add(std::string name, Tensor<T> init) {
    for (const auto& [n, _] : entries_) {
      if (n == name) throw std::invalid_argument("duplicate parameter name: " + name);
    }
    Var<T> v = parameter(std::move(init));
    entries_.emplace_back(std::move(name), v);
    return v;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  Var<T> get(const std::string& name) const {
    for (const auto& [n, v] : entries_)
      if (n == name) return v;
    throw std::out_of_range("unknown parameter: " + name);
  }

  bool contains(const std::string& name) const {
    for (const auto& [n, _] : entries_)
      if (n == name) return true;
    return false;
  }

  std::size_t scalar_count() const {
    std::size_t c = 0;
    for (const auto& [_, v] : entries_) c += v.numel();
    return c;
  }

  void zero_grad() {
    for (auto& [_, v] : entries_) v.zero_grad();
  }

  /// Copies values from a store with the same names and extents, converting precision.
  template <class U>
  void copy_values_from(const ParamStore<U>& other) {
    if (other.size() != size()) throw std::invalid_argument("parameter registries differ in size");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& [name, src] = other.entries()[i];
      auto& [dst_name, dst] = entries_[i];
      if (name != dst_name || src.shape() != dst.shape()) {
        throw std::invalid_argument("parameter mismatch at " + dst_name + " vs " + name);
      }
      auto& out = dst.mutable_value();
      for (std::size_t k = 0; k < out.numel(); ++k) out[k] = static_cast<T>(src.value()[k]);
    }
  }

 private:
  std::vector<Entry> entries_;
};

/// uniform(−a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <class T>
Tensor<T> xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <class T>
Tensor<T> conv_weight(std::size_t k, std::size_t cin, std::size_t cout, std::mt19937_64& rng) {
  return xavier_uniform<T>({k, k, cin, cout}, k * k * cin, k * k * cout, rng);
}

template <class T>
Tensor<T> dense_weight(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return xavier_uniform<T>({in, out}, in, out, rng);
}

}  // namespace ifdd
