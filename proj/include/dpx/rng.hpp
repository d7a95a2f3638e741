#pragma once

#include <cstdint>

#include "dpx/tensor.hpp"

namespace dpx {

/// Counter-based splittable generator.
///
/// Output i of a stream is splitmix64_mix(key + (i + 1) * 0x9E3779B97F4A7C15), i.e. the
/// SplitMix64 finalizer applied to a Weyl sequence. Child streams are keyed by
/// mixing the parent key with the stream id, so draws never depend on call order
/// across streams. Normals use the Marsaglia polar method with a log built only
/// from IEEE basic operations, which keeps every draw bit-reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;
  double normal() noexcept;
  /// Normal with the given std, resampled until |z| <= bound standard deviations.
  double truncated_normal(double std, double bound = 2.0) noexcept;

  Rng split(std::uint64_t stream) const noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  template <class T>
  Tensor<T> uniform_tensor(Shape shape, double lo, double hi) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(uniform(lo, hi));
    return t;
  }
  template <class T>
  Tensor<T> normal_tensor(Shape shape, double std) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(std * normal());
    return t;
  }
  template <class T>
  Tensor<T> truncated_normal_tensor(Shape shape, double std) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(truncated_normal(std));
    return t;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64_mix(std::uint64_t z) noexcept;

/// Natural log using only +, -, *, / and frexp/ldexp; bit-identical on IEEE-754 targets.
double portable_log(double x) noexcept;

}  // namespace dpx
