#include "procal/simd/kernels.hpp"

#if defined(PROCAL_HAVE_NEON)

#include <arm_neon.h>

namespace procal::simd::detail {

// Two float64x2 accumulators hold lanes {0,1} and {2,3}; vfmaq is avoided
// to keep the scalar rounding sequence.
double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0);
  float64x2_t hi = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    lo = vaddq_f64(lo, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    hi = vaddq_f64(hi, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double s[4];
  vst1q_f64(s, lo);
  vst1q_f64(s + 2, hi);
  for (std::size_t lane = 0; i < n; ++i, ++lane) s[lane] += a[i] * b[i];
  return (s[0] + s[1]) + (s[2] + s[3]);
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace procal::simd::detail

#endif
