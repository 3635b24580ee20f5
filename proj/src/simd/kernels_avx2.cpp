#include "kinfer/simd/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define KINFER_HAVE_AVX2 1
#else
#define KINFER_HAVE_AVX2 0
#endif

namespace kinfer::simd {

#if KINFER_HAVE_AVX2
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    __m256d y0 = _mm256_loadu_pd(y + k);
    __m256d y1 = _mm256_loadu_pd(y + k + 4);
    y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + k), y0);
    y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + k + 4), y1);
    _mm256_storeu_pd(y + k, y0);
    _mm256_storeu_pd(y + k + 4, y1);
  }
  for (; k + 4 <= n; k += 4) {
    __m256d y0 = _mm256_loadu_pd(y + k);
    y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + k), y0);
    _mm256_storeu_pd(y + k, y0);
  }
  for (; k < n; ++k) y[k] += a * x[k];
}

void gram_accumulate_avx2(const double* P, std::size_t rows, std::size_t cols,
                          std::size_t ld, double* G) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = P + r * ld;
    for (std::size_t a = 0; a < cols; ++a) {
      const double s = row[a];
      if (s == 0.0) continue;
      axpy_avx2(s, row, G + a * cols, cols);
    }
  }
}

void gemv_t_accumulate_avx2(const double* P, std::size_t rows, std::size_t cols,
                            std::size_t ld, const double* y, double* out) {
  for (std::size_t r = 0; r < rows; ++r) axpy_avx2(y[r], P + r * ld, out, cols);
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + k), _mm256_loadu_pd(y + k), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + k + 4), _mm256_loadu_pd(y + k + 4), acc1);
  }
  for (; k + 4 <= n; k += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + k), _mm256_loadu_pd(y + k), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; k < n; ++k) s += x[k] * y[k];
  return s;
}

double weighted_sum_squares_avx2(const double* w, const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d vx = _mm256_loadu_pd(x + k);
    acc = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + k), vx), vx, acc);
  }
  double s = hsum(acc);
  for (; k < n; ++k) s += w[k] * x[k] * x[k];
  return s;
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Isa::Avx2,          gram_accumulate_avx2,
                                 gemv_t_accumulate_avx2, dot_avx2,
                                 weighted_sum_squares_avx2, axpy_avx2};
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported ? &table : nullptr;
}

#else

const KernelTable* avx2_table() { return nullptr; }

#endif

}  // namespace kinfer::simd
