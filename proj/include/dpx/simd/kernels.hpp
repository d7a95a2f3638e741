#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace dpx::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa) noexcept;

/// Inner loops shared by the tensor ops. Every variant accumulates in the same
/// order as the scalar reference and never fuses multiply-add, so all variants
/// produce bit-identical results.
template <class T>
struct KernelTable {
  /// c[m x n] = a[m x k] * b[k x n], accumulated over k in ascending order.
  void (*matmul)(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);
  void (*add)(const T* a, const T* b, T* out, std::size_t n);
  void (*sub)(const T* a, const T* b, T* out, std::size_t n);
  void (*mul)(const T* a, const T* b, T* out, std::size_t n);
  /// y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  /// out = alpha * x
  void (*scale)(T alpha, const T* x, T* out, std::size_t n);
};

/// True if the variant was compiled in and the running CPU supports it.
bool isa_available(Isa isa) noexcept;
/// All variants usable on this machine, scalar first.
std::vector<Isa> available_isas();

/// Variant chosen once at first use: the widest available, unless the
/// DPX_SIMD environment variable is "scalar" or "avx2".
Isa active_isa() noexcept;

template <class T>
const KernelTable<T>& kernels_for(Isa isa);

template <class T>
const KernelTable<T>& kernels() {
  return kernels_for<T>(active_isa());
}

namespace detail {
template <class T>
const KernelTable<T>& scalar_table() noexcept;
template <class T>
const KernelTable<T>& avx2_table() noexcept;
}  // namespace detail

}  // namespace dpx::simd
