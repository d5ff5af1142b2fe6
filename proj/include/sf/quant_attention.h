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

#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "sf/attention.h"
#include "sf/numerics.h"

namespace sf {

// Q/K precision. `kFull` keeps the operand in double precision.
enum class IntFormat { kInt8, kInt4, kFull };
// P/V precision. `kInt8` is symmetric per-block int8 on V (P stays as given).
enum class FloatFormat { kFp8E4M3, kFp8E5M2, kInt8, kFull };

std::string_view to_string(IntFormat f);
std::string_view to_string(FloatFormat f);
IntFormat parse_int_format(std::string_view name);
FloatFormat parse_float_format(std::string_view name);

struct QuantScheme {
  IntFormat q_format = IntFormat::kInt8;
  IntFormat k_format = IntFormat::kInt8;
  FloatFormat p_format = FloatFormat::kFp8E4M3;
  FloatFormat v_format = FloatFormat::kFp8E4M3;
  bool k_smoothing = true;
  std::size_t block_size = 32;  // rows along the sequence axis

  // Everything in double precision, no smoothing.
  static QuantScheme full_precision();

  void validate() const;

  friend bool operator==(const QuantScheme&, const QuantScheme&) = default;
};

// Symmetric, zero point 0. value ~= code * scale.
struct QuantizedBlock {
  std::vector<std::int16_t> codes;
  double scale = 1.0;
};

int max_code(int bits);

// Splits x into consecutive blocks of block_elems values (the last may be
// shorter). scale = max|x| / (2^(bits-1) - 1), codes rounded half away from
// zero and clamped; an all-zero block gets scale 1 and zero codes.
std::vector<QuantizedBlock> quantize_symmetric(std::span<const double> x,
                                               int bits,
                                               std::size_t block_elems);

std::vector<double> dequantize(const std::vector<QuantizedBlock>& blocks);

// Per-head mean of k over the sequence axis, and k minus that mean.
struct SmoothedKeys {
  Tensor centered;  // [heads, seq, dim]
  Tensor mean;      // [heads, 1, dim]
};

SmoothedKeys smooth_k(const Tensor& k);

enum class Fp8Format { kE4M3, kE5M2 };

double fp8_max_finite(Fp8Format f);
// Round to nearest representable value, ties to even, saturating at the
// largest finite magnitude. Subnormals are kept.
double fp8_round(double x, Fp8Format f);
Tensor fp8_round(const Tensor& x, Fp8Format f);

// Bit-level codec; E4M3 follows the finite-only variant (S.1111.111 is NaN,
// no infinities), E5M2 follows IEEE conventions.
double fp8_decode(std::uint8_t code, Fp8Format f);
std::uint8_t fp8_encode(double x, Fp8Format f);
bool fp8_is_nan_code(std::uint8_t code, Fp8Format f);

struct AccuracyReport {
  double cosine_similarity = 1.0;
  double relative_l1 = 0.0;
  double max_abs_err = 0.0;
};

AccuracyReport compare_outputs(const Tensor& reference, const Tensor& candidate);

struct SageResult {
  Tensor o;
  AccuracyReport report;
};

// Quantized attention: optional key smoothing, integer QK^T rescaled per
// block pair, full-precision softmax, P and V rounded to their formats,
// PV accumulated in double. The report compares against attention_reference.
SageResult sage_attention(const AttentionInputs& inp, const QuantScheme& scheme);

// Same computation without the reference comparison.
Tensor sage_attention_output(const AttentionInputs& inp,
                             const QuantScheme& scheme);

// Kinds whose V range is within this factor of the widest are left at E4M3.
inline constexpr double kLowResRangeRatio = 2.0;

// Default scheme (int8 Q/K, E4M3 P/V, smoothing) for every kind seen in
// `stats`. When the widest mean V range is at least kLowResRangeRatio times
// the narrowest, the kind(s) holding the narrowest range switch V to E5M2.
// Throws ConfigError on empty input.
std::map<BlockKind, QuantScheme> recommend_scheme(
    std::span<const RangeStats> stats);

}  // namespace sf
