// Compiled with -mavx2. Only reached after a runtime CPU check.
#include <immintrin.h>

#include "dpx/simd/kernels.hpp"

namespace dpx::simd::detail {

namespace {

struct F32 {
  using T = float;
  using V = __m256;
  static constexpr std::size_t kLanes = 8;
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V set1(T x) { return _mm256_set1_ps(x); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static V sub(V a, V b) { return _mm256_sub_ps(a, b); }
  static V mul(V a, V b) { return _mm256_mul_ps(a, b); }
};

struct F64 {
  using T = double;
  using V = __m256d;
  static constexpr std::size_t kLanes = 4;
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V set1(T x) { return _mm256_set1_pd(x); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static V sub(V a, V b) { return _mm256_sub_pd(a, b); }
  static V mul(V a, V b) { return _mm256_mul_pd(a, b); }
};

template <class S>
void matmul(const typename S::T* a, const typename S::T* b, typename S::T* c, std::size_t m,
            std::size_t k, std::size_t n) {
  using T = typename S::T;
  constexpr std::size_t L = S::kLanes;
  const std::size_t vec_end = n - n % L;
  for (std::size_t i = 0; i < m * n; ++i) c[i] = T(0);
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const auto av = S::set1(aip);
      const T* brow = b + p * n;
      std::size_t j = 0;
      for (; j < vec_end; j += L) {
        S::store(crow + j, S::add(S::load(crow + j), S::mul(av, S::load(brow + j))));
      }
      for (; j < n; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

template <class S, class Op, class ScalarOp>
void binary(const typename S::T* a, const typename S::T* b, typename S::T* out, std::size_t n, Op op,
            ScalarOp sop) {
  constexpr std::size_t L = S::kLanes;
  std::size_t i = 0;
  for (; i + L <= n; i += L) S::store(out + i, op(S::load(a + i), S::load(b + i)));
  for (; i < n; ++i) out[i] = sop(a[i], b[i]);
}

template <class S>
void add(const typename S::T* a, const typename S::T* b, typename S::T* out, std::size_t n) {
  binary<S>(a, b, out, n, S::add, [](auto x, auto y) { return x + y; });
}
template <class S>
void sub(const typename S::T* a, const typename S::T* b, typename S::T* out, std::size_t n) {
  binary<S>(a, b, out, n, S::sub, [](auto x, auto y) { return x - y; });
}
template <class S>
void mul(const typename S::T* a, const typename S::T* b, typename S::T* out, std::size_t n) {
  binary<S>(a, b, out, n, S::mul, [](auto x, auto y) { return x * y; });
}

template <class S>
void axpy(typename S::T alpha, const typename S::T* x, typename S::T* y, std::size_t n) {
  constexpr std::size_t L = S::kLanes;
  const auto av = S::set1(alpha);
  std::size_t i = 0;
  for (; i + L <= n; i += L) S::store(y + i, S::add(S::load(y + i), S::mul(av, S::load(x + i))));
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

template <class S>
void scale(typename S::T alpha, const typename S::T* x, typename S::T* out, std::size_t n) {
  constexpr std::size_t L = S::kLanes;
  const auto av = S::set1(alpha);
  std::size_t i = 0;
  for (; i + L <= n; i += L) S::store(out + i, S::mul(av, S::load(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

template <class S>
const KernelTable<typename S::T>& make_table() noexcept {
  static const KernelTable<typename S::T> table{&matmul<S>, &add<S>, &sub<S>,
                                                &mul<S>,    &axpy<S>, &scale<S>};
  return table;
}

}  // namespace

template <>
const KernelTable<float>& avx2_table<float>() noexcept {
  return make_table<F32>();
}
template <>
const KernelTable<double>& avx2_table<double>() noexcept {
  return make_table<F64>();
}

}  // namespace dpx::simd::detail
