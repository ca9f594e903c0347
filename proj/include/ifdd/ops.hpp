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

// Differentiable operations. There is no implicit broadcasting: every op
// states the extents it accepts and throws ShapeError otherwise.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "ifdd/autodiff.hpp"
#include "ifdd/tensor.hpp"

namespace ifdd {

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

template <class T>
bool wants(const Node<T>& n, std::size_t i) {
  return n.inputs[i]->requires_grad;
}

template <class T>
Tensor<T>& grad_of(Node<T>& n, std::size_t i) {
  return n.inputs[i]->grad_buffer();
}

template <class T>
const Tensor<T>& value_of(const Node<T>& n, std::size_t i) {
  return n.inputs[i]->value;
}

/// (outer, len, inner) decomposition of a shape around one axis.
inline void split_axis(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& len, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra and structural ops
// ---------------------------------------------------------------------------

/// a[m×k] · b[k×n].
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require(a.value().rank() == 2 && b.value().rank() == 2, "matmul expects rank-2 operands");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  detail::require(b.dim(0) == k, "matmul inner extents disagree: " + to_string(a.shape()) + " · " + to_string(b.shape()));
  Tensor<T> out({m, n});
  const T* A = a.value().ptr();
  const T* B = b.value().ptr();
  T* C = out.ptr();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      const T* brow = B + p * n;
      T* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return detail::make_result<T>("matmul", std::move(out), {a, b}, [m, k, n](Node<T>& node) {
    const T* G = node.grad.ptr();
    const T* A = detail::value_of(node, 0).ptr();
    const T* B = detail::value_of(node, 1).ptr();
    if (detail::wants(node, 0)) {
      // dA = G·Bᵀ, accumulated row by row as axpys over Bᵀ.
      std::vector<T> bt(k * n);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
      T* dA = detail::grad_of(node, 0).ptr();
      for (std::size_t i = 0; i < m; ++i) {
        T* drow = dA + i * k;
        for (std::size_t j = 0; j < n; ++j) {
          const T gv = G[i * n + j];
          const T* btrow = bt.data() + j * k;
          for (std::size_t p = 0; p < k; ++p) drow[p] += gv * btrow[p];
        }
      }
    }
    if (detail::wants(node, 1)) {
      T* dB = detail::grad_of(node, 1).ptr();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const T av = A[i * k + p];
          const T* grow = G + i * n;
          T* drow = dB + p * n;
          for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
        }
      }
    }
  });
}

template <class T>
Var<T> transpose(const Var<T>& a) {
  detail::require(a.value().rank() == 2, "transpose expects a rank-2 operand");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.value()[i * n + j];
  return detail::make_result<T>("transpose", std::move(out), {a}, [m, n](Node<T>& node) {
    auto& ga = detail::grad_of(node, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += node.grad[j * m + i];
  });
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return detail::make_result<T>("reshape", std::move(out), {a}, [](Node<T>& node) {
    auto& ga = detail::grad_of(node, 0);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += node.grad[i];
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require(a.shape() == b.shape(), "add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return detail::make_result<T>("add", std::move(out), {a, b}, [](Node<T>& node) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!detail::wants(node, k)) continue;
      auto& g = detail::grad_of(node, k);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += node.grad[i];
    }
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require(a.shape() == b.shape(), "sub: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return detail::make_result<T>("sub", std::move(out), {a, b}, [](Node<T>& node) {
    if (detail::wants(node, 0)) {
      auto& g = detail::grad_of(node, 0);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += node.grad[i];
    }
    if (detail::wants(node, 1)) {
      auto& g = detail::grad_of(node, 1);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= node.grad[i];
    }
  });
}

/// Elementwise product of equally shaped operands.
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require(a.shape() == b.shape(), "mul: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return detail::make_result<T>("mul", std::move(out), {a, b}, [](Node<T>& node) {
    const auto& av = detail::value_of(node, 0);
    const auto& bv = detail::value_of(node, 1);
    if (detail::wants(node, 0)) {
      auto& g = detail::grad_of(node, 0);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += node.grad[i] * bv[i];
    }
    if (detail::wants(node, 1)) {
      auto& g = detail::grad_of(node, 1);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += node.grad[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= s;
  return detail::make_result<T>("scale", std::move(out), {a}, [s](Node<T>& node) {
    auto& g = detail::grad_of(node, 0);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s * node.grad[i];
  });
}

/// x[..., n] + b[n], the bias broadcast over all leading positions.
template <class T>
Var<T> add_bias(const Var<T>& x, const Var<T>& b) {
  const std::size_t n = b.numel();
  detail::require(b.value().rank() == 1 && x.shape().back() == n,
                  "add_bias: bias " + to_string(b.shape()) + " vs input " + to_string(x.shape()));
  Tensor<T> out = x.value();
  const std::size_t rows = out.numel() / n;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += b.value()[j];
  return detail::make_result<T>("add_bias", std::move(out), {x, b}, [rows, n](Node<T>& node) {
    if (detail::wants(node, 0)) {
      auto& g = detail::grad_of(node, 0);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += node.grad[i];
    }
    if (detail::wants(node, 1)) {
      auto& g = detail::grad_of(node, 1);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) g[j] += node.grad[r * n + j];
    }
  });
}

/// x·w + b for x[m×k], w[k×n], b[n].
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return add_bias(matmul(x, w), b);
}

template <class T>
Var<T> sum(const Var<T>& a) {
  return detail::make_result<T>("sum", Tensor<T>::scalar(a.value().sum()), {a}, [](Node<T>& node) {
    auto& g = detail::grad_of(node, 0);
    const T s = node.grad[0];
    for (auto& v : g.data()) v += s;
  });
}

/// Concatenation along `axis`; all other extents must agree.
template <class T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  detail::require(!parts.empty(), "concat of nothing");
  Shape shape = parts.front().shape();
  detail::require(axis < shape.size(), "concat axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    detail::require(s.size() == shape.size(), "concat rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis) detail::require(s[d] == shape[d], "concat: " + to_string(s) + " vs " + to_string(shape));
    total += s[axis];
  }
  shape[axis] = total;
  std::size_t outer, len, inner;
  detail::split_axis(shape, axis, outer, len, inner);
  Tensor<T> out(shape);
  std::vector<std::size_t> widths;
  std::size_t start = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(axis) * inner;
    widths.push_back(w);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.value().ptr() + o * w, w, out.ptr() + o * len * inner + start);
    start += w;
  }
  return detail::make_result<T>("concat", std::move(out), parts, [widths, outer, len, inner](Node<T>& node) {
    std::size_t start = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const std::size_t w = widths[k];
      if (detail::wants(node, k)) {
        auto& g = detail::grad_of(node, k);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < w; ++i) g[o * w + i] += node.grad[o * len * inner + start + i];
      }
      start += w;
    }
  });
}

/// Rows [begin, begin+count) along the leading axis.
template <class T>
Var<T> slice_rows(const Var<T>& a, std::size_t begin, std::size_t count) {
  detail::require(count > 0 && begin + count <= a.dim(0), "slice_rows out of range for " + to_string(a.shape()));
  Shape shape = a.shape();
  shape[0] = count;
  const std::size_t row = a.numel() / a.dim(0);
  Tensor<T> out(shape);
  std::copy_n(a.value().ptr() + begin * row, count * row, out.ptr());
  return detail::make_result<T>("slice_rows", std::move(out), {a}, [begin, row](Node<T>& node) {
    auto& g = detail::grad_of(node, 0);
    for (std::size_t i = 0; i < node.grad.numel(); ++i) g[begin * row + i] += node.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities and normalizations
// ---------------------------------------------------------------------------

/// Softmax along `axis`, max-shifted.
template <class T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  detail::require(axis < x.value().rank(), "softmax axis out of range");
  std::size_t outer, len, inner;
  detail::split_axis(x.shape(), axis, outer, len, inner);
  Tensor<T> out(x.shape());
  const T* X = x.value().ptr();
  T* Y = out.ptr();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = X[base];
      for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, X[base + l * inner]);
      T z = 0;
      for (std::size_t l = 0; l < len; ++l) {
        const T e = std::exp(X[base + l * inner] - mx);
        Y[base + l * inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < len; ++l) Y[base + l * inner] /= z;
    }
  }
  return detail::make_result<T>("softmax", std::move(out), {x}, [outer, len, inner](Node<T>& node) {
    auto& g = detail::grad_of(node, 0);
    const T* Y = node.value.ptr();
    const T* G = node.grad.ptr();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = 0;
        for (std::size_t l = 0; l < len; ++l) dot += G[base + l * inner] * Y[base + l * inner];
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t i = base + l * inner;
          g[i] += Y[i] * (G[i] - dot);
        }
      }
    }
  });
}

/// Saturated outputs are pulled back to the largest representable value
/// below 1 in magnitude, so the result always lies strictly inside (−1, 1).
template <class T>
Var<T> tanh(const Var<T>& x) {
  static const T edge = std::nextafter(T(1), T(0));
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = std::clamp(std::tanh(v), -edge, edge);
  return detail::make_result<T>("tanh", std::move(out), {x}, [](Node<T>& node) {
    auto& g = detail::grad_of(node, 0);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const T y = node.value[i];
      g[i] += node.grad[i] * (T(1) - y * y);
    }
  });
}

/// Exact GELU, x·Φ(x).
template <class T>
Var<T> gelu(const Var<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  return detail::make_result<T>("gelu", std::move(out), {x}, [](Node<T>& node) {
    constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
    const auto& xv = detail::value_of(node, 0);
    auto& g = detail::grad_of(node, 0);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const T v = xv[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      g[i] += node.grad[i] * (cdf + v * pdf);
    }
  });
}

/// Layer normalization over the last axis. `gamma`/`beta` may be left
/// undefined for the non-affine form.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  if (!(eps > T(0))) throw std::invalid_argument("layer_norm eps must be positive");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  const bool affine = gamma.defined();
  if (affine) {
    detail::require(gamma.numel() == n && beta.defined() && beta.numel() == n, "layer_norm affine extents");
  }
  Tensor<T> out(x.shape());
  std::vector<T> xhat(x.numel());
  std::vector<T> rstd(rows);
  const T* X = x.value().ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    T mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += X[r * n + j];
    mean /= T(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const T d = X[r * n + j] - mean;
      var += d * d;
    }
    var /= T(n);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t i = r * n + j;
      xhat[i] = (X[i] - mean) * rstd[r];
      out[i] = affine ? xhat[i] * gamma.value()[j] + beta.value()[j] : xhat[i];
    }
  }
  std::vector<Var<T>> inputs{x};
  if (affine) {
    inputs.push_back(gamma);
    inputs.push_back(beta);
  }
  return detail::make_result<T>(
      "layer_norm", std::move(out), inputs, [rows, n, affine, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& node) {
        const T* G = node.grad.ptr();
        std::vector<T> dxhat(n);
        for (std::size_t r = 0; r < rows; ++r) {
          T mean_d = 0, mean_dx = 0;
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t i = r * n + j;
            dxhat[j] = affine ? G[i] * node.inputs[1]->value[j] : G[i];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat[i];
          }
          mean_d /= T(n);
          mean_dx /= T(n);
          if (detail::wants(node, 0)) {
            auto& gx = detail::grad_of(node, 0);
            for (std::size_t j = 0; j < n; ++j) {
              const std::size_t i = r * n + j;
              gx[i] += rstd[r] * (dxhat[j] - mean_d - xhat[i] * mean_dx);
            }
          }
          if (affine && detail::wants(node, 1)) {
            auto& gg = detail::grad_of(node, 1);
            for (std::size_t j = 0; j < n; ++j) gg[j] += G[r * n + j] * xhat[r * n + j];
          }
          if (affine && detail::wants(node, 2)) {
            auto& gb = detail::grad_of(node, 2);
            for (std::size_t j = 0; j < n; ++j) gb[j] += G[r * n + j];
          }
        }
      });
}

template <class T>
Var<T> layer_norm(const Var<T>& x, T eps) {
  return layer_norm(x, Var<T>{}, Var<T>{}, eps);
}

/// Elementwise Huber: ½x² for |x| ≤ δ, δ(|x| − δ/2) beyond.
template <class T>
Var<T> huber(const Var<T>& x, T delta) {
  if (!(delta > T(0))) throw std::invalid_argument("huber delta must be positive");
  Tensor<T> out = x.value();
  for (auto& v : out.data()) {
    const T a = std::abs(v);
    v = a <= delta ? T(0.5) * v * v : delta * (a - T(0.5) * delta);
  }
  return detail::make_result<T>("huber", std::move(out), {x}, [delta](Node<T>& node) {
    const auto& xv = detail::value_of(node, 0);
    auto& g = detail::grad_of(node, 0);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const T v = xv[i];
      const T d = std::abs(v) <= delta ? v : (v > 0 ? delta : -delta);
      g[i] += node.grad[i] * d;
    }
  });
}

/// −log softmax(logits)[label]; logits are read as a flat vector.
template <class T>
Var<T> cross_entropy(const Var<T>& logits, std::size_t label) {
  const std::size_t n = logits.numel();
  if (label >= n) {
    throw std::out_of_range("cross_entropy label " + std::to_string(label) + " outside [0, " + std::to_string(n) + ")");
  }
  const T* z = logits.value().ptr();
  T mx = z[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, z[i]);
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(z[i] - mx);
  const T lse = mx + std::log(s);
  return detail::make_result<T>("cross_entropy", Tensor<T>::scalar(lse - z[label]), {logits},
                                [n, label, lse](Node<T>& node) {
                                  const auto& zv = detail::value_of(node, 0);
                                  auto& g = detail::grad_of(node, 0);
                                  const T gs = node.grad[0];
                                  for (std::size_t i = 0; i < n; ++i) {
                                    const T p = std::exp(zv[i] - lse);
                                    g[i] += gs * (p - (i == label ? T(1) : T(0)));
                                  }
                                });
}

/// Hard clamp into [lo, hi]; no gradient reaches entries that were clipped.
template <class T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = std::clamp(v, lo, hi);
  return detail::make_result<T>("clamp", std::move(out), {x}, [lo, hi](Node<T>& node) {
    const auto& xv = detail::value_of(node, 0);
    auto& g = detail::grad_of(node, 0);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (xv[i] >= lo && xv[i] <= hi) g[i] += node.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Video-shaped ops. Feature maps are (T, H, W, C), channels fastest.
// ---------------------------------------------------------------------------

/// Mean over non-overlapping factor×factor spatial windows.
template <class T>
Var<T> avg_pool_spatial(const Var<T>& x, std::size_t factor = 2) {
  detail::require(x.value().rank() == 4, "avg_pool_spatial expects (T,H,W,C)");
  const std::size_t t = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  detail::require(factor > 0 && h % factor == 0 && w % factor == 0,
                  "avg_pool_spatial: extents " + to_string(x.shape()) + " not divisible by " + std::to_string(factor));
  const std::size_t oh = h / factor, ow = w / factor;
  const T inv = T(1) / T(factor * factor);
  Tensor<T> out({t, oh, ow, c});
  const T* X = x.value().ptr();
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        T* o = out.ptr() + ((f * oh + i) * ow + j) * c;
        for (std::size_t di = 0; di < factor; ++di)
          for (std::size_t dj = 0; dj < factor; ++dj) {
            const T* src = X + ((f * h + i * factor + di) * w + j * factor + dj) * c;
            for (std::size_t k = 0; k < c; ++k) o[k] += src[k];
          }
        for (std::size_t k = 0; k < c; ++k) o[k] *= inv;
      }
  return detail::make_result<T>("avg_pool_spatial", std::move(out), {x}, [=](Node<T>& node) {
    auto& g = detail::grad_of(node, 0);
    for (std::size_t f = 0; f < t; ++f)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          const T* go = node.grad.ptr() + ((f * oh + i) * ow + j) * c;
          for (std::size_t di = 0; di < factor; ++di)
            for (std::size_t dj = 0; dj < factor; ++dj) {
              T* dst = g.ptr() + ((f * h + i * factor + di) * w + j * factor + dj) * c;
              for (std::size_t k = 0; k < c; ++k) dst[k] += go[k] * inv;
            }
        }
  });
}

/// Mean over non-overlapping groups of `factor` consecutive frames.
template <class T>
Var<T> avg_pool_temporal(const Var<T>& x, std::size_t factor = 2) {
  const std::size_t t = x.dim(0);
  detail::require(factor > 0 && t % factor == 0,
                  "avg_pool_temporal: T=" + std::to_string(t) + " not divisible by " + std::to_string(factor));
  const std::size_t frame = x.numel() / t;
  Shape shape = x.shape();
  shape[0] = t / factor;
  Tensor<T> out(shape);
  const T inv = T(1) / T(factor);
  for (std::size_t o = 0; o < shape[0]; ++o) {
    T* dst = out.ptr() + o * frame;
    for (std::size_t k = 0; k < factor; ++k) {
      const T* src = x.value().ptr() + (o * factor + k) * frame;
      for (std::size_t i = 0; i < frame; ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < frame; ++i) dst[i] *= inv;
  }
  return detail::make_result<T>("avg_pool_temporal", std::move(out), {x}, [frame, factor, inv](Node<T>& node) {
    auto& g = detail::grad_of(node, 0);
    const std::size_t outer = node.grad.numel() / frame;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t k = 0; k < factor; ++k) {
        T* dst = g.ptr() + (o * factor + k) * frame;
        const T* src = node.grad.ptr() + o * frame;
        for (std::size_t i = 0; i < frame; ++i) dst[i] += src[i] * inv;
      }
  });
}

/// (T,H,W,C) → (T,C): mean over the spatial positions of each frame.
template <class T>
Var<T> spatial_mean(const Var<T>& x) {
  detail::require(x.value().rank() == 4, "spatial_mean expects (T,H,W,C)");
  const std::size_t t = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  const T inv = T(1) / T(hw);
  Tensor<T> out({t, c});
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t p = 0; p < hw; ++p) {
      const T* src = x.value().ptr() + (f * hw + p) * c;
      for (std::size_t k = 0; k < c; ++k) out[f * c + k] += src[k];
    }
  for (auto& v : out.data()) v *= inv;
  return detail::make_result<T>("spatial_mean", std::move(out), {x}, [t, hw, c, inv](Node<T>& node) {
    auto& g = detail::grad_of(node, 0);
    for (std::size_t f = 0; f < t; ++f)
      for (std::size_t p = 0; p < hw; ++p) {
        T* dst = g.ptr() + (f * hw + p) * c;
        for (std::size_t k = 0; k < c; ++k) dst[k] += node.grad[f * c + k] * inv;
      }
  });
}

/// Stacks each group of `factor` consecutive frames on the channel axis:
/// (T,H,W,C) → (T/factor, H, W, factor·C), earlier frames first.
template <class T>
Var<T> fold_time_into_channels(const Var<T>& x, std::size_t factor = 2) {
  detail::require(x.value().rank() == 4 && factor > 0 && x.dim(0) % factor == 0,
                  "fold_time_into_channels: bad extents " + to_string(x.shape()));
  const std::size_t t = x.dim(0) / factor, hw = x.dim(1) * x.dim(2), c = x.dim(3);
  Tensor<T> out({t, x.dim(1), x.dim(2), factor * c});
  auto index = [=](std::size_t f, std::size_t k, std::size_t p, std::size_t ch, std::size_t& src, std::size_t& dst) {
    src = ((f * factor + k) * hw + p) * c + ch;
    dst = (f * hw + p) * factor * c + k * c + ch;
  };
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t k = 0; k < factor; ++k)
      for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t s, d;
          index(f, k, p, ch, s, d);
          out[d] = x.value()[s];
        }
  return detail::make_result<T>("fold_time_into_channels", std::move(out), {x}, [=](Node<T>& node) {
    auto& g = detail::grad_of(node, 0);
    for (std::size_t f = 0; f < t; ++f)
      for (std::size_t k = 0; k < factor; ++k)
        for (std::size_t p = 0; p < hw; ++p)
          for (std::size_t ch = 0; ch < c; ++ch) {
            std::size_t s, d;
            index(f, k, p, ch, s, d);
            g[s] += node.grad[d];
          }
  });
}

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t padding = 1;
};

/// Per-frame 2-D convolution. x (T,H,W,Cin), weight (k,k,Cin,Cout), optional
/// bias (Cout). Zero padding; frames never mix.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, Conv2dParams p = {}) {
  detail::require(x.value().rank() == 4, "conv2d expects input (T,H,W,Cin), got " + to_string(x.shape()));
  detail::require(weight.value().rank() == 4 && weight.dim(0) == weight.dim(1),
                  "conv2d expects square weight (k,k,Cin,Cout), got " + to_string(weight.shape()));
  const std::size_t t = x.dim(0), h = x.dim(1), w = x.dim(2), ci = x.dim(3);
  const std::size_t k = weight.dim(0), co = weight.dim(3);
  detail::require(weight.dim(2) == ci, "conv2d channel mismatch: input has " + std::to_string(ci) +
                                           " channels, weight expects " + std::to_string(weight.dim(2)));
  const bool has_bias = bias.defined();
  if (has_bias) detail::require(bias.numel() == co, "conv2d bias extent");
  detail::require(p.stride > 0 && p.dilation > 0, "conv2d stride and dilation must be positive");
  const std::size_t span = p.dilation * (k - 1) + 1;
  detail::require(h + 2 * p.padding >= span && w + 2 * p.padding >= span, "conv2d kernel larger than padded input");
  const std::size_t oh = (h + 2 * p.padding - span) / p.stride + 1;
  const std::size_t ow = (w + 2 * p.padding - span) / p.stride + 1;

  Tensor<T> out({t, oh, ow, co});
  const T* X = x.value().ptr();
  const T* Wt = weight.value().ptr();
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        T* o = out.ptr() + ((f * oh + i) * ow + j) * co;
        if (has_bias) std::copy_n(bias.value().ptr(), co, o);
        for (std::size_t ki = 0; ki < k; ++ki) {
          const long ii = long(i * p.stride + ki * p.dilation) - long(p.padding);
          if (ii < 0 || ii >= long(h)) continue;
          for (std::size_t kj = 0; kj < k; ++kj) {
            const long jj = long(j * p.stride + kj * p.dilation) - long(p.padding);
            if (jj < 0 || jj >= long(w)) continue;
            const T* src = X + ((f * h + std::size_t(ii)) * w + std::size_t(jj)) * ci;
            const T* wk = Wt + (ki * k + kj) * ci * co;
            for (std::size_t a = 0; a < ci; ++a) {
              const T v = src[a];
              const T* wr = wk + a * co;
              for (std::size_t b = 0; b < co; ++b) o[b] += v * wr[b];
            }
          }
        }
      }

  std::vector<Var<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return detail::make_result<T>("conv2d", std::move(out), inputs, [=](Node<T>& node) {
    const T* X = detail::value_of(node, 0).ptr();
    const T* Wt = detail::value_of(node, 1).ptr();
    T* dX = detail::wants(node, 0) ? detail::grad_of(node, 0).ptr() : nullptr;
    T* dW = detail::wants(node, 1) ? detail::grad_of(node, 1).ptr() : nullptr;
    T* dB = has_bias && detail::wants(node, 2) ? detail::grad_of(node, 2).ptr() : nullptr;
    // Per-tap transposed weights (Cout, Cin) turn the input-gradient sum into axpys.
    std::vector<T> wt;
    if (dX) {
      wt.resize(k * k * ci * co);
      for (std::size_t tap = 0; tap < k * k; ++tap)
        for (std::size_t a = 0; a < ci; ++a)
          for (std::size_t b = 0; b < co; ++b) wt[tap * ci * co + b * ci + a] = Wt[tap * ci * co + a * co + b];
    }
    for (std::size_t f = 0; f < t; ++f)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          const T* g = node.grad.ptr() + ((f * oh + i) * ow + j) * co;
          if (dB)
            for (std::size_t b = 0; b < co; ++b) dB[b] += g[b];
          for (std::size_t ki = 0; ki < k; ++ki) {
            const long ii = long(i * p.stride + ki * p.dilation) - long(p.padding);
            if (ii < 0 || ii >= long(h)) continue;
            for (std::size_t kj = 0; kj < k; ++kj) {
              const long jj = long(j * p.stride + kj * p.dilation) - long(p.padding);
              if (jj < 0 || jj >= long(w)) continue;
              const std::size_t src = ((f * h + std::size_t(ii)) * w + std::size_t(jj)) * ci;
              const std::size_t wk = (ki * k + kj) * ci * co;
              if (dX) {
                T* dx = dX + src;
                for (std::size_t b = 0; b < co; ++b) {
                  const T gv = g[b];
                  const T* wtr = wt.data() + wk + b * ci;
                  for (std::size_t a = 0; a < ci; ++a) dx[a] += gv * wtr[a];
                }
              }
              if (dW) {
                for (std::size_t a = 0; a < ci; ++a) {
                  const T v = X[src + a];
                  T* dwr = dW + wk + a * co;
                  for (std::size_t b = 0; b < co; ++b) dwr[b] += v * g[b];
                }
              }
            }
          }
        }
  });
}

/// Fractional gather along the leading axis. For each index i with
/// lo = floor(idx[i]) and frac = idx[i] − lo:
///   out[i] = (1 − frac)·x[lo] + frac·x[min(lo+1, T−1)]
/// Integer indices return x[lo] exactly. d out[i] / d idx[i] is
/// x[lo+1] − x[lo], which is zero at idx = T − 1.
template <class T>
Var<T> interp_gather(const Var<T>& x, const Var<T>& idx) {
  detail::require(idx.value().rank() == 1, "interp_gather expects a rank-1 index vector");
  const std::size_t t = x.dim(0);
  const std::size_t frame = x.numel() / t;
  const std::size_t n = idx.numel();
  std::vector<std::size_t> lo(n), hi(n);
  std::vector<T> frac(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T v = idx.value()[i];
    if (!(v >= T(0) && v <= T(t - 1))) {
      throw std::out_of_range("interp_gather index " + std::to_string(double(v)) + " outside [0, " +
                              std::to_string(t - 1) + "]");
    }
    const T fl = std::floor(v);
    lo[i] = static_cast<std::size_t>(fl);
    hi[i] = std::min(lo[i] + 1, t - 1);
    frac[i] = v - fl;
  }
  Shape shape = x.shape();
  shape[0] = n;
  Tensor<T> out(shape);
  const T* X = x.value().ptr();
  for (std::size_t i = 0; i < n; ++i) {
    T* dst = out.ptr() + i * frame;
    const T* a = X + lo[i] * frame;
    if (frac[i] == T(0)) {
      std::copy_n(a, frame, dst);
      continue;
    }
    const T* b = X + hi[i] * frame;
    const T wa = T(1) - frac[i], wb = frac[i];
    for (std::size_t e = 0; e < frame; ++e) dst[e] = wa * a[e] + wb * b[e];
  }
  return detail::make_result<T>("interp_gather", std::move(out), {x, idx},
                                [n, frame, lo = std::move(lo), hi = std::move(hi), frac = std::move(frac)](Node<T>& node) {
                                  const T* X = detail::value_of(node, 0).ptr();
                                  const T* G = node.grad.ptr();
                                  if (detail::wants(node, 0)) {
                                    T* dX = detail::grad_of(node, 0).ptr();
                                    for (std::size_t i = 0; i < n; ++i) {
                                      const T wa = T(1) - frac[i], wb = frac[i];
                                      T* da = dX + lo[i] * frame;
                                      T* db = dX + hi[i] * frame;
                                      const T* g = G + i * frame;
                                      for (std::size_t e = 0; e < frame; ++e) {
                                        da[e] += wa * g[e];
                                        db[e] += wb * g[e];
                                      }
                                    }
                                  }
                                  if (detail::wants(node, 1)) {
                                    auto& dI = detail::grad_of(node, 1);
                                    for (std::size_t i = 0; i < n; ++i) {
                                      if (hi[i] == lo[i]) continue;
                                      const T* a = X + lo[i] * frame;
                                      const T* b = X + hi[i] * frame;
                                      const T* g = G + i * frame;
                                      T acc = 0;
                                      for (std::size_t e = 0; e < frame; ++e) acc += g[e] * (b[e] - a[e]);
                                      dI[i] += acc;
                                    }
                                  }
                                });
}

}  // namespace ifdd
