/* Copyright 2026 The SceneForge Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Compiled with -mavx2 -mfma; only reached after a CPUID check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "sf/kernels.h"

namespace sf::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// exp on [-708, 709] with Cody-Waite reduction and a degree-12 Taylor
// polynomial on |r| <= ln2/2. Relative error is a few ulp.
inline __m256d exp_pd(__m256d x) {
  const __m256d lo_clamp = _mm256_set1_pd(-708.0);
  const __m256d hi_clamp = _mm256_set1_pd(709.0);
  x = _mm256_max_pd(_mm256_min_pd(x, hi_clamp), lo_clamp);

  const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);
  __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);

  static constexpr double kInvFact[] = {
      1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0,
      1.0 / 40320.0,     1.0 / 5040.0,     1.0 / 720.0,     1.0 / 120.0,
      1.0 / 24.0,        1.0 / 6.0,        0.5,             1.0,
      1.0};
  __m256d p = _mm256_set1_pd(kInvFact[0]);
  for (int i = 1; i < 13; ++i) {
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kInvFact[i]));
  }

  __m128i ni = _mm256_cvtpd_epi32(n);
  __m256i e = _mm256_cvtepi32_epi64(ni);
  e = _mm256_add_epi64(e, _mm256_set1_epi64x(1023));
  e = _mm256_slli_epi64(e, 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(e));
}

inline double exp_tail(double x) {
  alignas(32) double buf[4] = {x, 0.0, 0.0, 0.0};
  _mm256_store_pd(buf, exp_pd(_mm256_load_pd(buf)));
  return buf[0];
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                           acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                           acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s = std::fma(a[i], b[i], s);
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

// 4x8 register tile; every element is a sequential FMA chain over k, so the
// edge paths below produce the same bits as the vector lanes.
void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c,
               std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + (i + 0) * lda;
    const double* a1 = a + (i + 1) * lda;
    const double* a2 = a + (i + 2) * lda;
    const double* a3 = a + (i + 3) * lda;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
      __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
      __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
      __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * ldb + j;
        const __m256d b0 = _mm256_loadu_pd(brow);
        const __m256d b1 = _mm256_loadu_pd(brow + 4);
        __m256d av = _mm256_broadcast_sd(a0 + p);
        c00 = _mm256_fmadd_pd(av, b0, c00);
        c01 = _mm256_fmadd_pd(av, b1, c01);
        av = _mm256_broadcast_sd(a1 + p);
        c10 = _mm256_fmadd_pd(av, b0, c10);
        c11 = _mm256_fmadd_pd(av, b1, c11);
        av = _mm256_broadcast_sd(a2 + p);
        c20 = _mm256_fmadd_pd(av, b0, c20);
        c21 = _mm256_fmadd_pd(av, b1, c21);
        av = _mm256_broadcast_sd(a3 + p);
        c30 = _mm256_fmadd_pd(av, b0, c30);
        c31 = _mm256_fmadd_pd(av, b1, c31);
      }
      _mm256_storeu_pd(c + (i + 0) * ldc + j, c00);
      _mm256_storeu_pd(c + (i + 0) * ldc + j + 4, c01);
      _mm256_storeu_pd(c + (i + 1) * ldc + j, c10);
      _mm256_storeu_pd(c + (i + 1) * ldc + j + 4, c11);
      _mm256_storeu_pd(c + (i + 2) * ldc + j, c20);
      _mm256_storeu_pd(c + (i + 2) * ldc + j + 4, c21);
      _mm256_storeu_pd(c + (i + 3) * ldc + j, c30);
      _mm256_storeu_pd(c + (i + 3) * ldc + j + 4, c31);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d c0 = _mm256_setzero_pd(), c1 = _mm256_setzero_pd();
      __m256d c2 = _mm256_setzero_pd(), c3 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d bv = _mm256_loadu_pd(b + p * ldb + j);
        c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a0 + p), bv, c0);
        c1 = _mm256_fmadd_pd(_mm256_broadcast_sd(a1 + p), bv, c1);
        c2 = _mm256_fmadd_pd(_mm256_broadcast_sd(a2 + p), bv, c2);
        c3 = _mm256_fmadd_pd(_mm256_broadcast_sd(a3 + p), bv, c3);
      }
      _mm256_storeu_pd(c + (i + 0) * ldc + j, c0);
      _mm256_storeu_pd(c + (i + 1) * ldc + j, c1);
      _mm256_storeu_pd(c + (i + 2) * ldc + j, c2);
      _mm256_storeu_pd(c + (i + 3) * ldc + j, c3);
    }
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < 4; ++r) {
        const double* arow = a + (i + r) * lda;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s = std::fma(arow[p], b[p * ldb + j], s);
        c[(i + r) * ldc + j] = s;
      }
    }
  }
  for (; i < m; ++i) {
    const double* arow = a + i * lda;
    double* crow = c + i * ldc;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) axpy_avx2(arow[p], b + p * ldb, crow, n);
  }
}

double exp_shift_sum_avx2(double* x, std::size_t n, double shift) {
  const __m256d vs = _mm256_set1_pd(shift);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = exp_pd(_mm256_sub_pd(_mm256_loadu_pd(x + i), vs));
    _mm256_storeu_pd(x + i, v);
    acc = _mm256_add_pd(acc, v);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    x[i] = exp_tail(x[i] - shift);
    s += x[i];
  }
  return s;
}

void softmax_rows_avx2(double* x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = x + r * cols;
    std::size_t c = 0;
    double mx = row[0];
    if (cols >= 4) {
      __m256d vm = _mm256_loadu_pd(row);
      for (c = 4; c + 4 <= cols; c += 4) vm = _mm256_max_pd(vm, _mm256_loadu_pd(row + c));
      alignas(32) double lanes[4];
      _mm256_store_pd(lanes, vm);
      mx = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
    }
    for (; c < cols; ++c) mx = row[c] > mx ? row[c] : mx;
    const __m256d inv = _mm256_set1_pd(1.0 / exp_shift_sum_avx2(row, cols, mx));
    for (c = 0; c + 4 <= cols; c += 4) {
      _mm256_storeu_pd(row + c, _mm256_mul_pd(_mm256_loadu_pd(row + c), inv));
    }
    for (; c < cols; ++c) row[c] *= _mm256_cvtsd_f64(inv);
  }
}

void silu_avx2(double* x, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    __m256d e = exp_pd(_mm256_sub_pd(zero, v));
    _mm256_storeu_pd(x + i, _mm256_div_pd(v, _mm256_add_pd(one, e)));
  }
  for (; i < n; ++i) x[i] = x[i] / (1.0 + exp_tail(-x[i]));
}

std::int64_t dot_i16_avx2(const std::int16_t* a, const std::int16_t* b,
                          std::size_t n) {
  __m256i acc = _mm256_setzero_si256();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m256i va =
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + i));
    const __m256i vb =
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + i));
    // Pairwise products summed into int32, widened to int64 before they can
    // accumulate past the int32 range.
    const __m256i prod = _mm256_madd_epi16(va, vb);
    acc = _mm256_add_epi64(
        acc, _mm256_cvtepi32_epi64(_mm256_castsi256_si128(prod)));
    acc = _mm256_add_epi64(
        acc, _mm256_cvtepi32_epi64(_mm256_extracti128_si256(prod, 1)));
  }
  alignas(32) std::int64_t lanes[4];
  _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), acc);
  std::int64_t s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) {
    s += static_cast<std::int64_t>(a[i]) * static_cast<std::int64_t>(b[i]);
  }
  return s;
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t{Isa::kAvx2,        dot_avx2,
                             axpy_avx2,         gemm_avx2,
                             exp_shift_sum_avx2, softmax_rows_avx2,
                             silu_avx2,
                             dot_i16_avx2};
  return t;
}

}  // namespace sf::kernels
