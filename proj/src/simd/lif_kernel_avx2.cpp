#include <immintrin.h>

#include "spikectl/simd/lif_kernel.hpp"

namespace spikectl::simd {

namespace {

inline __m256d expm1_poly4(__m256d x) {
  const __m256d one = _mm256_set1_pd(1.0);
  __m256d p = one;
  for (int k = kExpm1Terms; k >= 2; --k) {
    const __m256d t = _mm256_mul_pd(x, _mm256_set1_pd(1.0 / k));
    p = _mm256_mul_pd(t, p);
    p = _mm256_add_pd(one, p);
  }
  return _mm256_mul_pd(x, p);
}

}  // namespace

void lif_update_avx2(const LifArrays& a, const LifStepParams& p) {
  const __m256d input = _mm256_set1_pd(p.input);
  const __m256d dt = _mm256_set1_pd(p.dt);
  const __m256d inv_tau = _mm256_set1_pd(p.inv_tau_rc);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d sign = _mm256_set1_pd(-0.0);

  std::size_t i = 0;
  for (; i + 4 <= a.n; i += 4) {
    const __m256d j = _mm256_add_pd(_mm256_mul_pd(_mm256_loadu_pd(a.drive_gain + i), input),
                                    _mm256_loadu_pd(a.bias + i));
    const __m256d r = _mm256_sub_pd(_mm256_loadu_pd(a.refractory + i), dt);
    // max(x, 0) then min(., dt), argument order matching std::max / std::min on the scalar side
    const __m256d delta = _mm256_min_pd(_mm256_max_pd(_mm256_sub_pd(dt, r), zero), dt);
    const __m256d e = expm1_poly4(_mm256_xor_pd(_mm256_mul_pd(delta, inv_tau), sign));
    __m256d v = _mm256_loadu_pd(a.voltage + i);
    v = _mm256_sub_pd(v, _mm256_mul_pd(_mm256_sub_pd(j, v), e));
    const int mask = _mm256_movemask_pd(_mm256_cmp_pd(v, one, _CMP_GT_OQ));
    for (int k = 0; k < 4; ++k) a.over[i + k] = (mask >> k) & 1;
    _mm256_storeu_pd(a.voltage + i, _mm256_max_pd(v, zero));
    _mm256_storeu_pd(a.refractory + i, r);
    _mm256_storeu_pd(a.current + i, j);
  }
  if (i < a.n) {
    LifArrays tail = a;
    tail.drive_gain += i;
    tail.bias += i;
    tail.voltage += i;
    tail.refractory += i;
    tail.current += i;
    tail.over += i;
    tail.n = a.n - i;
    lif_update_scalar(tail, p);
  }
}

}  // namespace spikectl::simd
