#include <atomic>
#include <cstdlib>
#include <cstring>

#include "spikectl/simd/lif_kernel.hpp"

namespace spikectl::simd {

namespace {

Isa probe() {
  const char* env = std::getenv("SPIKECTL_ISA");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return Isa::Scalar;
#if defined(SPIKECTL_HAVE_AVX2_KERNEL)
  if (__builtin_cpu_supports("avx2")) return Isa::Avx2;
#endif
  return Isa::Scalar;
}

std::atomic<int>& active() {
  static std::atomic<int> isa{static_cast<int>(probe())};
  return isa;
}

bool supported(Isa isa) {
  if (isa == Isa::Scalar) return true;
#if defined(SPIKECTL_HAVE_AVX2_KERNEL)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

}  // namespace

const char* isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

Isa detected_isa() { return probe(); }

Isa active_isa() { return static_cast<Isa>(active().load(std::memory_order_relaxed)); }

void set_isa(Isa isa) { active().store(static_cast<int>(supported(isa) ? isa : Isa::Scalar)); }

void lif_update(const LifArrays& a, const LifStepParams& p) {
#if defined(SPIKECTL_HAVE_AVX2_KERNEL)
  if (active_isa() == Isa::Avx2) {
    lif_update_avx2(a, p);
    return;
  }
#endif
  lif_update_scalar(a, p);
}

}  // namespace spikectl::simd
