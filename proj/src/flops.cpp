#include "dpx/flops.hpp"

namespace dpx::flops {

namespace {
thread_local std::uint64_t tally = 0;
}

void add(std::uint64_t n) noexcept { tally += n; }
std::uint64_t total() noexcept { return tally; }

}  // namespace dpx::flops
