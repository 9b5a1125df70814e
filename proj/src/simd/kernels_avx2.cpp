#include "procal/simd/kernels.hpp"

#if defined(PROCAL_HAVE_AVX2)

#include <immintrin.h>

namespace procal::simd::detail {

__attribute__((target("avx2"))) double dot_avx2(const double* a, const double* b,
                                                 std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_loadu_pd(a + i);
    const __m256d vb = _mm256_loadu_pd(b + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
  }
  alignas(32) double s[4];
  _mm256_store_pd(s, acc);
  // tail lands in the lanes the scalar reference would use
  for (std::size_t lane = 0; i < n; ++i, ++lane) s[lane] += a[i] * b[i];
  return (s[0] + s[1]) + (s[2] + s[3]);
}

__attribute__((target("avx2"))) void axpy_avx2(double alpha, const double* x, double* y,
                                               std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vy = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i))));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace procal::simd::detail

#endif
