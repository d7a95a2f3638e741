#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dpx/error.hpp"
#include "dpx/flops.hpp"
#include "dpx/simd/kernels.hpp"
#include "dpx/tensor.hpp"

namespace dpx {

namespace detail {
inline void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(s));
  }
}
inline std::size_t outer_count(const Shape& s, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < axis; ++i) n *= s[i];
  return n;
}
inline std::size_t inner_count(const Shape& s, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) n *= s[i];
  return n;
}
}  // namespace detail

/// a[m x k] * b[k x n]. FLOPs: 2mkn.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a.shape(), 2, "matmul lhs");
  detail::require_rank(b.shape(), 2, "matmul rhs");
  if (a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: inner extents disagree for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor<T> c({m, n});
  simd::kernels<T>().matmul(a.data().data(), b.data().data(), c.data().data(), m, k, n);
  flops::add(2 * m * k * n);
  return c;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_rank(a.shape(), 2, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<T> t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  simd::kernels<T>().add(a.data().data(), b.data().data(), out.data().data(), a.size());
  flops::add(a.size());
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  simd::kernels<T>().sub(a.data().data(), b.data().data(), out.data().data(), a.size());
  flops::add(a.size());
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  simd::kernels<T>().mul(a.data().data(), b.data().data(), out.data().data(), a.size());
  flops::add(a.size());
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T alpha) {
  Tensor<T> out(a.shape());
  simd::kernels<T>().scale(alpha, a.data().data(), out.data().data(), a.size());
  flops::add(a.size());
  return out;
}

/// dst += src. Used for gradient accumulation; not counted as model FLOPs.
template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  require_same_shape(dst, src, "accumulate");
  simd::kernels<T>().axpy(T(1), src.data().data(), dst.data().data(), src.size());
}

template <class T>
T sum(const Tensor<T>& a) {
  T s = T(0);
  for (auto v : a.data()) s += v;
  return s;
}

template <class T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "dot");
  T s = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  T m = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<T>(std::abs(a[i] - b[i])));
  return m;
}

template <class T>
T max_abs(const Tensor<T>& a) {
  T m = T(0);
  for (auto v : a.data()) m = std::max(m, static_cast<T>(std::abs(v)));
  return m;
}

template <class T>
bool all_finite(const Tensor<T>& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](T v) { return std::isfinite(v); });
}

/// Concatenates along `axis`; all other extents must agree.
template <class T>
Tensor<T> concat(const std::vector<std::reference_wrapper<const Tensor<T>>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  const Shape& first = parts.front().get().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.get().shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) throw DimensionError("concat: shape mismatch " + shape_str(first) + " vs " + shape_str(s));
    out_shape[axis] += s[axis];
  }
  Tensor<T> out(out_shape);
  const std::size_t outer = detail::outer_count(first, axis);
  const std::size_t inner = detail::inner_count(first, axis);
  T* dst = out.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (const auto& p : parts) {
      const std::size_t chunk = p.get().shape()[axis] * inner;
      const T* src = p.get().data().data() + o * chunk;
      dst = std::copy(src, src + chunk, dst);
    }
  }
  return out;
}

template <class T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
  return concat<T>({std::cref(a), std::cref(b)}, axis);
}

/// Elements [begin, end) along `axis`.
template <class T>
Tensor<T> slice(const Tensor<T>& t, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = t.shape();
  if (axis >= s.size()) throw DimensionError("slice: axis out of range for " + shape_str(s));
  if (begin > end || end > s[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of bounds for " + shape_str(s));
  }
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  Tensor<T> out(out_shape);
  const std::size_t outer = detail::outer_count(s, axis);
  const std::size_t inner = detail::inner_count(s, axis);
  T* dst = out.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = t.data().data() + (o * s[axis] + begin) * inner;
    dst = std::copy(src, src + (end - begin) * inner, dst);
  }
  return out;
}

/// Numerically stable softmax along `axis`. FLOPs: 4 per element
/// (max shift, exp, sum, divide). Non-finite input is a domain error.
template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("softmax: axis out of range for " + shape_str(s));
  if (!all_finite(x)) throw DomainError("softmax: non-finite input");
  Tensor<T> out(s);
  const std::size_t outer = detail::outer_count(s, axis);
  const std::size_t inner = detail::inner_count(s, axis);
  const std::size_t n = s[axis];
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = x[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[base + j * inner]);
      T total = T(0);
      for (std::size_t j = 0; j < n; ++j) {
        const T e = std::exp(x[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  flops::add(4 * x.size());
  return out;
}

/// Backward of softmax along the last axis given its output.
template <class T>
Tensor<T> softmax_backward_last(const Tensor<T>& out, const Tensor<T>& grad_out) {
  require_same_shape(out, grad_out, "softmax_backward");
  const std::size_t n = out.shape().back();
  const std::size_t rows = out.size() / std::max<std::size_t>(n, 1);
  Tensor<T> g(out.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    T inner = T(0);
    for (std::size_t j = 0; j < n; ++j) inner += grad_out[r * n + j] * out[r * n + j];
    for (std::size_t j = 0; j < n; ++j) g[r * n + j] = out[r * n + j] * (grad_out[r * n + j] - inner);
  }
  return g;
}

template <class T, class F>
Tensor<T> map(const Tensor<T>& x, F&& f) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

/// Column sums of a 2-D tensor: [m x n] -> [n].
template <class T>
Tensor<T> column_sum(const Tensor<T>& a) {
  detail::require_rank(a.shape(), 2, "column_sum");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<T> out({n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a.at(i, j);
  return out;
}

/// Flattens all leading axes: [..., d] -> [rows x d].
template <class T>
Tensor<T> as_matrix(const Tensor<T>& x) {
  if (x.rank() == 0) throw DimensionError("as_matrix: rank-0 tensor");
  const std::size_t d = x.shape().back();
  return x.reshaped({d == 0 ? 0 : x.size() / d, d});
}

}  // namespace dpx
