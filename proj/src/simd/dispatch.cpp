#include <cstdlib>
#include <string_view>

#include "dpx/error.hpp"
#include "dpx/simd/kernels.hpp"

namespace dpx::simd {

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(DPX_WITH_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out{Isa::kScalar};
  if (isa_available(Isa::kAvx2)) out.push_back(Isa::kAvx2);
  return out;
}

namespace {
Isa select_isa() noexcept {
  if (const char* env = std::getenv("DPX_SIMD")) {
    const std::string_view want(env);
    if (want == "scalar") return Isa::kScalar;
    if (want == "avx2" && isa_available(Isa::kAvx2)) return Isa::kAvx2;
  }
  return isa_available(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar;
}
}  // namespace

Isa active_isa() noexcept {
  static const Isa isa = select_isa();
  return isa;
}

template <class T>
const KernelTable<T>& kernels_for(Isa isa) {
  if (!isa_available(isa)) {
    throw ConfigError("SIMD variant '" + std::string(isa_name(isa)) + "' is not available on this machine");
  }
#if defined(DPX_WITH_AVX2)
  if (isa == Isa::kAvx2) return detail::avx2_table<T>();
#endif
  return detail::scalar_table<T>();
}

template const KernelTable<float>& kernels_for<float>(Isa);
template const KernelTable<double>& kernels_for<double>(Isa);

}  // namespace dpx::simd
