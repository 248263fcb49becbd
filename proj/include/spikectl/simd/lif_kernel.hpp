#pragma once

// Vectorizable part of the population LIF update. The scalar kernel is the
// reference; the AVX2 kernel must produce bit-identical results, so both use
// the same polynomial expm1 and the same operation order (no FMA contraction).

#include <cstddef>
#include <cstdint>

namespace spikectl::simd {

struct LifArrays {
  const double* drive_gain = nullptr;  // gain * encoder
  const double* bias = nullptr;
  double* voltage = nullptr;
  double* refractory = nullptr;
  double* current = nullptr;          // out: J for this step
  std::uint8_t* over = nullptr;       // out: 1 where the threshold was crossed
  std::size_t n = 0;
};

struct LifStepParams {
  double input = 0.0;   // normalized represented value
  double dt = 1e-3;
  double inv_tau_rc = 50.0;
};

// expm1 for |x| <= 0.5 by a truncated Taylor series in Horner form.
inline constexpr int kExpm1Terms = 16;

inline double expm1_poly(double x) {
  double p = 1.0;
  for (int k = kExpm1Terms; k >= 2; --k) {
    const double t = x * (1.0 / k);
    p = t * p;
    p = 1.0 + p;
  }
  return x * p;
}

void lif_update_scalar(const LifArrays& a, const LifStepParams& p);
#if defined(SPIKECTL_HAVE_AVX2_KERNEL)
void lif_update_avx2(const LifArrays& a, const LifStepParams& p);
#endif

enum class Isa { Scalar, Avx2 };

const char* isa_name(Isa isa);
/// Best kernel the running CPU supports (SPIKECTL_ISA=scalar forces the reference).
Isa detected_isa();
Isa active_isa();
/// Overrides dispatch; requesting an unsupported ISA falls back to scalar.
void set_isa(Isa isa);

/// Dispatches to the active kernel.
void lif_update(const LifArrays& a, const LifStepParams& p);

}  // namespace spikectl::simd
