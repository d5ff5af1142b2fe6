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

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

// Inner-loop arithmetic kernels. Every kernel has a portable scalar reference
// and, on x86-64, an AVX2/FMA variant. The variant is chosen once at runtime
// from CPUID; setting SF_KERNELS=scalar in the environment forces the scalar
// table. Both tables are deterministic for fixed inputs; they differ from each
// other only by floating-point rounding (FMA contraction and lane-wise
// partial sums), which the equivalence tests bound.
namespace sf::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;

  double (*dot)(const double* a, const double* b, std::size_t n);

  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  // c[m,n] = a[m,k] * b[k,n]; row-major with explicit leading dimensions.
  // Each output element is accumulated over k in increasing order.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c,
               std::size_t ldc);

  // x[i] = exp(x[i] - shift) in place; returns the sum of the results.
  double (*exp_shift_sum)(double* x, std::size_t n, double shift);

  // Numerically stable softmax of each row of a [rows, cols] buffer.
  void (*softmax_rows)(double* x, std::size_t rows, std::size_t cols);

  // x[i] = x[i] / (1 + exp(-x[i])) in place.
  void (*silu)(double* x, std::size_t n);

  // Exact integer dot product of 16-bit codes.
  std::int64_t (*dot_i16)(const std::int16_t* a, const std::int16_t* b,
                          std::size_t n);
};

const KernelTable& scalar_table();

// True when the running CPU can execute the given table.
bool isa_available(Isa isa);

// Table for a specific ISA. Throws sf::Error when unavailable.
const KernelTable& table(Isa isa);

// The table used by the rest of the library.
const KernelTable& active();

// Overrides the runtime choice (tests, benchmarks). Not thread-safe with
// respect to concurrently running kernels.
void select(Isa isa);

#if defined(SF_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

}  // namespace sf::kernels
