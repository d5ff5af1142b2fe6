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

#include <cmath>
#include <cstring>

#include "sf/kernels.h"

namespace sf::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a,
                 std::size_t lda, const double* b, std::size_t ldb, double* c,
                 std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    std::memset(crow, 0, n * sizeof(double));
    const double* arow = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      axpy_scalar(arow[p], b + p * ldb, crow, n);
    }
  }
}

double exp_shift_sum_scalar(double* x, std::size_t n, double shift) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - shift);
    s += x[i];
  }
  return s;
}

void softmax_rows_scalar(double* x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = x + r * cols;
    double mx = row[0];
    for (std::size_t c = 1; c < cols; ++c) mx = row[c] > mx ? row[c] : mx;
    const double inv = 1.0 / exp_shift_sum_scalar(row, cols, mx);
    for (std::size_t c = 0; c < cols; ++c) row[c] *= inv;
  }
}

void silu_scalar(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] / (1.0 + std::exp(-x[i]));
}

std::int64_t dot_i16_scalar(const std::int16_t* a, const std::int16_t* b,
                            std::size_t n) {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    s += static_cast<std::int64_t>(a[i]) * static_cast<std::int64_t>(b[i]);
  }
  return s;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{Isa::kScalar,        dot_scalar,
                             axpy_scalar,         gemm_scalar,
                             exp_shift_sum_scalar, softmax_rows_scalar,
                             silu_scalar,
                             dot_i16_scalar};
  return t;
}

}  // namespace sf::kernels
