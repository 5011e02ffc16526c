// Compiled with -mavx2 -mfma. Only reached through the dispatch table after a
// CPUID check, so no function here may be inlined into generic code.
#include <immintrin.h>

#include <cmath>

#include "momo/kernels.hpp"

namespace momo::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s = std::fma(a[i], b[i], s);
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

// C[i, j..j+3] for one A row against four B rows. Each output keeps its own
// accumulator so the per-element order matches dot_avx2 exactly.
inline void nt_row4(const double* ar, const double* b, double* cr, std::size_t j, std::size_t k, bool accumulate) {
  const double* b0 = b + j * k;
  const double* b1 = b0 + k;
  const double* b2 = b1 + k;
  const double* b3 = b2 + k;
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const __m256d va = _mm256_loadu_pd(ar + p);
    s0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b0 + p), s0);
    s1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b1 + p), s1);
    s2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b2 + p), s2);
    s3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b3 + p), s3);
  }
  double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
  for (; p < k; ++p) {
    r0 = std::fma(ar[p], b0[p], r0);
    r1 = std::fma(ar[p], b1[p], r1);
    r2 = std::fma(ar[p], b2[p], r2);
    r3 = std::fma(ar[p], b3[p], r3);
  }
  if (accumulate) {
    cr[j] += r0; cr[j + 1] += r1; cr[j + 2] += r2; cr[j + 3] += r3;
  } else {
    cr[j] = r0; cr[j + 1] = r1; cr[j + 2] = r2; cr[j + 3] = r3;
  }
}

void gemm_nt_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                  std::size_t k, bool accumulate) {
  const std::size_t k4 = k - k % 4;
  std::size_t i = 0;
  // Two A rows share each B load.
  for (; i + 2 <= m && k4 == k; i += 2) {
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    double* c0 = c + i * n;
    double* c1 = c0 + n;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      __m256d s00 = _mm256_setzero_pd(), s01 = _mm256_setzero_pd(), s02 = _mm256_setzero_pd(), s03 = _mm256_setzero_pd();
      __m256d s10 = _mm256_setzero_pd(), s11 = _mm256_setzero_pd(), s12 = _mm256_setzero_pd(), s13 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; p += 4) {
        const __m256d va0 = _mm256_loadu_pd(a0 + p), va1 = _mm256_loadu_pd(a1 + p);
        __m256d vb = _mm256_loadu_pd(b0 + p);
        s00 = _mm256_fmadd_pd(va0, vb, s00);
        s10 = _mm256_fmadd_pd(va1, vb, s10);
        vb = _mm256_loadu_pd(b1 + p);
        s01 = _mm256_fmadd_pd(va0, vb, s01);
        s11 = _mm256_fmadd_pd(va1, vb, s11);
        vb = _mm256_loadu_pd(b2 + p);
        s02 = _mm256_fmadd_pd(va0, vb, s02);
        s12 = _mm256_fmadd_pd(va1, vb, s12);
        vb = _mm256_loadu_pd(b3 + p);
        s03 = _mm256_fmadd_pd(va0, vb, s03);
        s13 = _mm256_fmadd_pd(va1, vb, s13);
      }
      const double r[8] = {hsum(s00), hsum(s01), hsum(s02), hsum(s03), hsum(s10), hsum(s11), hsum(s12), hsum(s13)};
      for (int q = 0; q < 4; ++q) {
        c0[j + q] = accumulate ? c0[j + q] + r[q] : r[q];
        c1[j + q] = accumulate ? c1[j + q] + r[4 + q] : r[4 + q];
      }
    }
    for (; j < n; ++j) {
      const double v0 = dot_avx2(a0, b + j * k, k), v1 = dot_avx2(a1, b + j * k, k);
      c0[j] = accumulate ? c0[j] + v0 : v0;
      c1[j] = accumulate ? c1[j] + v1 : v1;
    }
  }
  for (; i < m; ++i) {
    const double* ar = a + i * k;
    double* cr = c + i * n;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) nt_row4(ar, b, cr, j, k, accumulate);
    for (; j < n; ++j) {
      const double v = dot_avx2(ar, b + j * k, k);
      cr[j] = accumulate ? cr[j] + v : v;
    }
  }
}

// A(i, p) is a[i * k + p] for C = A B and a[p * m + i] for C = A^T B.
template <bool Trans>
inline double a_at(const double* a, std::size_t i, std::size_t p, std::size_t m, std::size_t k) {
  return Trans ? a[p * m + i] : a[i * k + p];
}

// One C row from column j0 on. Every element accumulates over p in order
// with FMA, so any blocking of rows and columns gives identical results.
template <bool Trans>
void row_tail(const double* a, const double* b, double* c, std::size_t i, std::size_t j0, std::size_t m,
              std::size_t n, std::size_t k, bool accumulate) {
  double* cr = c + i * n;
  std::size_t j = j0;
  for (; j + 16 <= n; j += 16) {
    __m256d c0, c1, c2, c3;
    if (accumulate) {
      c0 = _mm256_loadu_pd(cr + j); c1 = _mm256_loadu_pd(cr + j + 4);
      c2 = _mm256_loadu_pd(cr + j + 8); c3 = _mm256_loadu_pd(cr + j + 12);
    } else {
      c0 = c1 = c2 = c3 = _mm256_setzero_pd();
    }
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d va = _mm256_set1_pd(a_at<Trans>(a, i, p, m, k));
      const double* br = b + p * n + j;
      c0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(br), c0);
      c1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(br + 4), c1);
      c2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(br + 8), c2);
      c3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(br + 12), c3);
    }
    _mm256_storeu_pd(cr + j, c0); _mm256_storeu_pd(cr + j + 4, c1);
    _mm256_storeu_pd(cr + j + 8, c2); _mm256_storeu_pd(cr + j + 12, c3);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d c0 = accumulate ? _mm256_loadu_pd(cr + j) : _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p)
      c0 = _mm256_fmadd_pd(_mm256_set1_pd(a_at<Trans>(a, i, p, m, k)), _mm256_loadu_pd(b + p * n + j), c0);
    _mm256_storeu_pd(cr + j, c0);
  }
  for (; j < n; ++j) {
    double s = accumulate ? cr[j] : 0.0;
    for (std::size_t p = 0; p < k; ++p) s = std::fma(a_at<Trans>(a, i, p, m, k), b[p * n + j], s);
    cr[j] = s;
  }
}

// 4 x 8 register block: two B loads feed eight FMAs per p.
template <bool Trans>
void gemm_blocked(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
                  bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d acc[4][2];
      for (int r = 0; r < 4; ++r) {
        double* cr = c + (i + r) * n + j;
        acc[r][0] = accumulate ? _mm256_loadu_pd(cr) : _mm256_setzero_pd();
        acc[r][1] = accumulate ? _mm256_loadu_pd(cr + 4) : _mm256_setzero_pd();
      }
      for (std::size_t p = 0; p < k; ++p) {
        const double* br = b + p * n + j;
        const __m256d b0 = _mm256_loadu_pd(br), b1 = _mm256_loadu_pd(br + 4);
        for (int r = 0; r < 4; ++r) {
          const __m256d va = _mm256_set1_pd(a_at<Trans>(a, i + r, p, m, k));
          acc[r][0] = _mm256_fmadd_pd(va, b0, acc[r][0]);
          acc[r][1] = _mm256_fmadd_pd(va, b1, acc[r][1]);
        }
      }
      for (int r = 0; r < 4; ++r) {
        double* cr = c + (i + r) * n + j;
        _mm256_storeu_pd(cr, acc[r][0]);
        _mm256_storeu_pd(cr + 4, acc[r][1]);
      }
    }
    if (j < n)
      for (std::size_t r = 0; r < 4; ++r) row_tail<Trans>(a, b, c, i + r, j, m, n, k, accumulate);
  }
  for (; i < m; ++i) row_tail<Trans>(a, b, c, i, 0, m, n, k, accumulate);
}

void gemm_nn_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                  std::size_t k, bool accumulate) {
  gemm_blocked<false>(a, b, c, m, n, k, accumulate);
}

void gemm_tn_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                  std::size_t k, bool accumulate) {
  gemm_blocked<true>(a, b, c, m, n, k, accumulate);
}

}  // namespace

const KernelTable& avx2_table_impl() noexcept {
  static const KernelTable table{"avx2", dot_avx2, axpy_avx2, gemm_nt_avx2, gemm_nn_avx2, gemm_tn_avx2};
  return table;
}

}  // namespace momo::kernels
