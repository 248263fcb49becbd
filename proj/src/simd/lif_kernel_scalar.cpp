#include <algorithm>

#include "spikectl/simd/lif_kernel.hpp"

namespace spikectl::simd {

void lif_update_scalar(const LifArrays& a, const LifStepParams& p) {
  for (std::size_t i = 0; i < a.n; ++i) {
    const double j = a.drive_gain[i] * p.input + a.bias[i];
    const double r = a.refractory[i] - p.dt;
    const double delta = std::min(std::max(p.dt - r, 0.0), p.dt);
    const double e = expm1_poly(-(delta * p.inv_tau_rc));
    double v = a.voltage[i];
    v = v - (j - v) * e;
    a.over[i] = v > 1.0 ? 1 : 0;
    a.voltage[i] = std::max(v, 0.0);
    a.refractory[i] = r;
    a.current[i] = j;
  }
}

}  // namespace spikectl::simd
