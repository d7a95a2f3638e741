#pragma once

#include <cstdint>

namespace dpx::flops {

// Counting convention: a multiply-add pair is 2 FLOPs, every other arithmetic
// operation (add, sub, mul, div, exp, tanh, sqrt) is 1. Index arithmetic and
// data movement are free. Operations report into a thread-local tally.

void add(std::uint64_t n) noexcept;
std::uint64_t total() noexcept;

/// Measures FLOPs reported on this thread during its lifetime.
class Scope {
 public:
  Scope() noexcept : start_(total()) {}
  std::uint64_t count() const noexcept { return total() - start_; }

 private:
  std::uint64_t start_;
};

}  // namespace dpx::flops
