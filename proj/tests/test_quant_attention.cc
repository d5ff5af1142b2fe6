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

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "sf/error.h"
#include "sf/quant_attention.h"
#include "test_util.h"

using namespace sf;

namespace {

AttentionInputs normal_inputs(std::size_t h, std::size_t s, std::size_t d,
                              std::uint64_t seed) {
  return {testing::normal_tensor({h, s, d}, seed),
          testing::normal_tensor({h, s, d}, seed + 1),
          testing::normal_tensor({h, s, d}, seed + 2), std::nullopt};
}

QuantScheme with_qk(IntFormat f) {
  QuantScheme s;
  s.q_format = f;
  s.k_format = f;
  return s;
}

// Nearest finite value among every decoded code, ties to the even code.
double fp8_oracle(double x, Fp8Format f) {
  const double mx = fp8_max_finite(f);
  if (x >= mx) return mx;
  if (x <= -mx) return -mx;
  double best = 0.0, best_err = std::numeric_limits<double>::infinity();
  int best_code = 0;
  for (int c = 0; c < 256; ++c) {
    const auto code = static_cast<std::uint8_t>(c);
    if (fp8_is_nan_code(code, f)) continue;
    const double v = fp8_decode(code, f);
    if (!std::isfinite(v)) continue;
    const double err = std::abs(v - x);
    if (err < best_err || (err == best_err && (c & 1) == 0 && (best_code & 1) == 1)) {
      best = v;
      best_err = err;
      best_code = c;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("quantize_symmetric examples") {
  const std::vector<double> zeros{0, 0, 0};
  auto zb = quantize_symmetric(zeros, 8, 32);
  REQUIRE(zb.size() == 1);
  CHECK(zb[0].scale == 1.0);
  CHECK(zb[0].codes == std::vector<std::int16_t>{0, 0, 0});

  const std::vector<double> x{-1.0, 0.5, 1.0};
  auto b = quantize_symmetric(x, 8, 32);
  REQUIRE(b.size() == 1);
  CHECK(b[0].scale == 1.0 / 127.0);
  CHECK(b[0].codes == std::vector<std::int16_t>{-127, 64, 127});

  CHECK(max_code(8) == 127);
  CHECK(max_code(4) == 7);
}

TEST_CASE("quantization error is at most half a step") {
  std::mt19937_64 rng(5);
  for (int bits : {8, 4}) {
    for (std::size_t n = 1; n <= 64; ++n) {
      const Tensor x = testing::random_tensor({n}, rng(), -3.0, 3.0);
      const std::size_t block = 1 + n % 17;
      const auto blocks = quantize_symmetric(x.data(), bits, block);
      CHECK(blocks.size() == (n + block - 1) / block);
      const auto back = dequantize(blocks);
      REQUIRE(back.size() == n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& qb = blocks[i / block];
        CHECK(qb.scale > 0.0);
        CHECK(std::abs(back[i] - x[i]) <= qb.scale / 2 * (1 + 1e-12));
        CHECK(std::abs(qb.codes[i % block]) <= max_code(bits));
      }
    }
  }
}

TEST_CASE("smooth_k") {
  Tensor k({2, 4, 3});
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = i < 12 ? 2.5 : -1.0;
  const SmoothedKeys s = smooth_k(k);
  CHECK(s.mean.shape() == Shape{2, 1, 3});
  for (double v : s.centered.data()) CHECK(v == 0.0);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    AttentionInputs in = normal_inputs(2, 12, 8, 10 * seed);
    const Tensor ref = attention_reference(in);
    in.k = smooth_k(in.k).centered;
    CHECK(rel_l1(ref, attention_reference(in)) <= 1e-12);
  }
}

TEST_CASE("smoothing helps offset-dominated keys") {
  AttentionInputs in = normal_inputs(2, 32, 16, 3);
  for (std::size_t i = 0; i < in.k.size(); ++i) in.k[i] += 12.0 + (i % 16) * 0.5;
  QuantScheme on;
  QuantScheme off = on;
  off.k_smoothing = false;
  CHECK(sage_attention(in, on).report.relative_l1 <
        sage_attention(in, off).report.relative_l1);
}

TEST_CASE("fp8 rounding examples") {
  for (Fp8Format f : {Fp8Format::kE4M3, Fp8Format::kE5M2}) {
    CHECK(fp8_round(0.0, f) == 0.0);
    CHECK(fp8_round(1.0, f) == 1.0);
  }
  CHECK(fp8_max_finite(Fp8Format::kE4M3) == 448.0);
  CHECK(fp8_max_finite(Fp8Format::kE5M2) == 57344.0);
  CHECK(fp8_round(500.0, Fp8Format::kE4M3) == 448.0);
  CHECK(fp8_round(-1e9, Fp8Format::kE4M3) == -448.0);
  CHECK(fp8_round(1e6, Fp8Format::kE5M2) == 57344.0);
  // Spacing above 1 is 1/8 in E4M3; the midpoint goes to the even mantissa.
  CHECK(fp8_round(1.0625, Fp8Format::kE4M3) == 1.0);
  CHECK(fp8_round(1.1875, Fp8Format::kE4M3) == 1.25);
  // Smallest subnormals.
  CHECK(fp8_round(std::ldexp(1.0, -9), Fp8Format::kE4M3) == std::ldexp(1.0, -9));
  CHECK(fp8_round(std::ldexp(1.0, -16), Fp8Format::kE5M2) == std::ldexp(1.0, -16));
  CHECK(fp8_round(std::ldexp(1.0, -11), Fp8Format::kE4M3) == 0.0);
  CHECK(fp8_decode(0x38, Fp8Format::kE4M3) == 1.0);
  CHECK(fp8_decode(0x7E, Fp8Format::kE4M3) == 448.0);
  CHECK(fp8_is_nan_code(0x7F, Fp8Format::kE4M3));
  CHECK(fp8_decode(0x3C, Fp8Format::kE5M2) == 1.0);
}

TEST_CASE("every finite E4M3 and E5M2 code round trips") {
  for (Fp8Format f : {Fp8Format::kE4M3, Fp8Format::kE5M2}) {
    for (int c = 0; c < 256; ++c) {
      const auto code = static_cast<std::uint8_t>(c);
      if (fp8_is_nan_code(code, f)) continue;
      const double v = fp8_decode(code, f);
      if (!std::isfinite(v)) continue;
      CHECK(fp8_decode(fp8_encode(v, f), f) == v);
      CHECK(fp8_round(v, f) == v);
    }
  }
}

TEST_CASE("fp8 rounding matches the nearest-code oracle and is idempotent") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> mant(-1.0, 1.0);
  std::uniform_int_distribution<int> ex(-20, 18);
  for (int i = 0; i < 3000; ++i) {
    const double x = std::ldexp(mant(rng), ex(rng));
    for (Fp8Format f : {Fp8Format::kE4M3, Fp8Format::kE5M2}) {
      const double r = fp8_round(x, f);
      CHECK(r == fp8_oracle(x, f));
      CHECK(fp8_round(r, f) == r);
    }
  }
}

TEST_CASE("degenerate scheme is bitwise exact") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const AttentionInputs in = normal_inputs(2, 16, 16, seed);
    const SageResult r = sage_attention(in, QuantScheme::full_precision());
    CHECK(r.o == attention_reference(in));
    CHECK(r.report.cosine_similarity == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(r.report.relative_l1 == 0.0);
    CHECK(r.report.max_abs_err == 0.0);
  }
}

TEST_CASE("single key returns the rounded value row") {
  for (FloatFormat vf : {FloatFormat::kFp8E4M3, FloatFormat::kFp8E5M2}) {
    AttentionInputs in = normal_inputs(2, 1, 8, 44);
    QuantScheme s;
    s.v_format = vf;
    const Tensor o = sage_attention_output(in, s);
    const Tensor expect = fp8_round(
        in.v, vf == FloatFormat::kFp8E4M3 ? Fp8Format::kE4M3 : Fp8Format::kE5M2);
    CHECK(o == expect);
  }
}

TEST_CASE("default scheme fidelity on standard-normal inputs") {
  const AttentionInputs in = normal_inputs(2, 16, 16, 2025);
  const SageResult r = sage_attention(in, QuantScheme{});
  CHECK(r.report.cosine_similarity >= 0.99);
  // Regression anchor for this seed; E4M3 rounding of V alone costs ~0.025.
  CHECK(r.report.relative_l1 == doctest::Approx(0.0315411).epsilon(1e-5));
}

TEST_CASE("int8 keys never do worse than int4") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const AttentionInputs in = normal_inputs(2, 16, 16, 1000 + 3 * seed);
    CHECK(sage_attention(in, with_qk(IntFormat::kInt8)).report.relative_l1 <=
          sage_attention(in, with_qk(IntFormat::kInt4)).report.relative_l1);
  }
}

TEST_CASE("accuracy report on identical tensors") {
  const Tensor a = testing::normal_tensor({3, 4}, 1);
  const AccuracyReport r = compare_outputs(a, a);
  CHECK(r.cosine_similarity == 1.0);
  CHECK(r.relative_l1 == 0.0);
  CHECK(r.max_abs_err == 0.0);
}

TEST_CASE("scheme validation and names") {
  QuantScheme s;
  s.block_size = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  for (IntFormat f : {IntFormat::kInt8, IntFormat::kInt4, IntFormat::kFull})
    CHECK(parse_int_format(to_string(f)) == f);
  for (FloatFormat f : {FloatFormat::kFp8E4M3, FloatFormat::kFp8E5M2,
                        FloatFormat::kInt8, FloatFormat::kFull})
    CHECK(parse_float_format(to_string(f)) == f);
  CHECK_THROWS_AS(parse_float_format("fp16"), ConfigError);
}

TEST_CASE("int8 value variant stays close to the reference") {
  const AttentionInputs in = normal_inputs(2, 16, 16, 8);
  QuantScheme s;
  s.v_format = FloatFormat::kInt8;
  CHECK(sage_attention(in, s).report.cosine_similarity >= 0.99);
}

namespace {

RangeStats stats_with_v_range(BlockKind k, double range) {
  RangeStats r;
  r.kind = k;
  r.v = {-range / 2, range / 2, 0.0, range / 4};
  return r;
}

}  // namespace

TEST_CASE("recommend_scheme") {
  const std::vector<RangeStats> spread{
      stats_with_v_range(BlockKind::kSpatial, 10.0),
      stats_with_v_range(BlockKind::kTemporal, 5.0),
      stats_with_v_range(BlockKind::kCrossView, 1.0),
      stats_with_v_range(BlockKind::kCrossView, 1.0)};
  const auto rec = recommend_scheme(spread);
  CHECK(rec.at(BlockKind::kCrossView).v_format == FloatFormat::kFp8E5M2);
  CHECK(rec.at(BlockKind::kSpatial).v_format == FloatFormat::kFp8E4M3);
  CHECK(rec.at(BlockKind::kTemporal).v_format == FloatFormat::kFp8E4M3);
  CHECK(rec.at(BlockKind::kSpatial) == QuantScheme{});

  const std::vector<RangeStats> equal{stats_with_v_range(BlockKind::kSpatial, 2.0),
                                      stats_with_v_range(BlockKind::kTemporal, 2.0),
                                      stats_with_v_range(BlockKind::kCross, 2.0)};
  for (const auto& [k, s] : recommend_scheme(equal)) CHECK(s == QuantScheme{});

  const std::vector<RangeStats> single{stats_with_v_range(BlockKind::kTemporal, 3.0)};
  const auto one = recommend_scheme(single);
  REQUIRE(one.size() == 1);
  CHECK(one.at(BlockKind::kTemporal) == QuantScheme{});

  CHECK_THROWS_AS(recommend_scheme(std::vector<RangeStats>{}), ConfigError);
}
