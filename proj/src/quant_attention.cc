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

#include "sf/quant_attention.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sf/error.h"
#include "sf/kernels.h"

namespace sf {

std::string_view to_string(IntFormat f) {
  switch (f) {
    case IntFormat::kInt8:
      return "int8";
    case IntFormat::kInt4:
      return "int4";
    case IntFormat::kFull:
      return "full";
  }
  return "full";
}

std::string_view to_string(FloatFormat f) {
  switch (f) {
    case FloatFormat::kFp8E4M3:
      return "fp8_e4m3";
    case FloatFormat::kFp8E5M2:
      return "fp8_e5m2";
    case FloatFormat::kInt8:
      return "int8";
    case FloatFormat::kFull:
      return "full";
  }
  return "full";
}

IntFormat parse_int_format(std::string_view name) {
  for (IntFormat f : {IntFormat::kInt8, IntFormat::kInt4, IntFormat::kFull}) {
    if (to_string(f) == name) return f;
  }
  throw ConfigError("unknown integer format '" + std::string(name) + "'");
}

FloatFormat parse_float_format(std::string_view name) {
  for (FloatFormat f : {FloatFormat::kFp8E4M3, FloatFormat::kFp8E5M2,
                        FloatFormat::kInt8, FloatFormat::kFull}) {
    if (to_string(f) == name) return f;
  }
  throw ConfigError("unknown float format '" + std::string(name) + "'");
}

QuantScheme QuantScheme::full_precision() {
  QuantScheme s;
  s.q_format = IntFormat::kFull;
  s.k_format = IntFormat::kFull;
  s.p_format = FloatFormat::kFull;
  s.v_format = FloatFormat::kFull;
  s.k_smoothing = false;
  return s;
}

void QuantScheme::validate() const {
  if (block_size < 1) throw ConfigError("block_size: must be >= 1");
}

int max_code(int bits) {
  if (bits != 8 && bits != 4) {
    throw ConfigError("quantization supports 8 or 4 bits, got " +
                      std::to_string(bits));
  }
  return (1 << (bits - 1)) - 1;
}

std::vector<QuantizedBlock> quantize_symmetric(std::span<const double> x,
                                               int bits,
                                               std::size_t block_elems) {
  const int qmax = max_code(bits);
  if (block_elems == 0) throw ConfigError("block size must be >= 1");
  std::vector<QuantizedBlock> out;
  out.reserve((x.size() + block_elems - 1) / block_elems);
  for (std::size_t start = 0; start < x.size(); start += block_elems) {
    const std::size_t n = std::min(block_elems, x.size() - start);
    QuantizedBlock b;
    b.codes.resize(n);
    double amax = 0.0;
    for (std::size_t i = 0; i < n; ++i) amax = std::max(amax, std::abs(x[start + i]));
    if (amax == 0.0) {
      b.scale = 1.0;
    } else {
      b.scale = amax / qmax;
      for (std::size_t i = 0; i < n; ++i) {
        const double c = std::round(x[start + i] / b.scale);
        b.codes[i] = static_cast<std::int16_t>(
            std::clamp(c, static_cast<double>(-qmax), static_cast<double>(qmax)));
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<double> dequantize(const std::vector<QuantizedBlock>& blocks) {
  std::vector<double> out;
  for (const auto& b : blocks) {
    for (std::int16_t c : b.codes) out.push_back(c * b.scale);
  }
  return out;
}

SmoothedKeys smooth_k(const Tensor& k) {
  if (k.rank() != 3) throw DimensionError("smooth_k expects [heads, seq, dim]");
  const std::size_t heads = k.dim(0), seq = k.dim(1), dim = k.dim(2);
  SmoothedKeys s{k, Tensor({heads, 1, dim})};
  for (std::size_t h = 0; h < heads; ++h) {
    const double* kh = k.ptr() + h * seq * dim;
    double* mean = s.mean.ptr() + h * dim;
    for (std::size_t i = 0; i < seq; ++i)
      for (std::size_t d = 0; d < dim; ++d) mean[d] += kh[i * dim + d];
    for (std::size_t d = 0; d < dim; ++d) mean[d] /= static_cast<double>(seq);
    double* ch = s.centered.ptr() + h * seq * dim;
    for (std::size_t i = 0; i < seq; ++i)
      for (std::size_t d = 0; d < dim; ++d) ch[i * dim + d] -= mean[d];
  }
  return s;
}

namespace {

struct Fp8Spec {
  int man_bits;
  int bias;
  int min_normal_exp;
  double max_finite;
};

Fp8Spec spec_of(Fp8Format f) {
  if (f == Fp8Format::kE4M3) return {3, 7, -6, 448.0};
  return {2, 15, -14, 57344.0};
}

}  // namespace

double fp8_max_finite(Fp8Format f) { return spec_of(f).max_finite; }

double fp8_round(double x, Fp8Format f) {
  const Fp8Spec s = spec_of(f);
  const double a = std::abs(x);
  if (a == 0.0) return x;
  const int e = std::max(std::ilogb(a), s.min_normal_exp);
  const int step_exp = e - s.man_bits;
  double q = std::ldexp(std::nearbyint(std::ldexp(a, -step_exp)), step_exp);
  q = std::min(q, s.max_finite);
  return std::copysign(q, x);
}

Tensor fp8_round(const Tensor& x, Fp8Format f) {
  Tensor y = x;
  for (double& v : y.data()) v = fp8_round(v, f);
  return y;
}

bool fp8_is_nan_code(std::uint8_t code, Fp8Format f) {
  const Fp8Spec s = spec_of(f);
  const int exp_bits = 7 - s.man_bits;
  const int e = (code >> s.man_bits) & ((1 << exp_bits) - 1);
  const int m = code & ((1 << s.man_bits) - 1);
  if (f == Fp8Format::kE4M3) return e == 15 && m == 7;
  return e == 31;  // infinities and NaNs; neither is produced by rounding
}

double fp8_decode(std::uint8_t code, Fp8Format f) {
  const Fp8Spec s = spec_of(f);
  if (fp8_is_nan_code(code, f)) return std::numeric_limits<double>::quiet_NaN();
  const int exp_bits = 7 - s.man_bits;
  const bool neg = (code & 0x80) != 0;
  const int e = (code >> s.man_bits) & ((1 << exp_bits) - 1);
  const int m = code & ((1 << s.man_bits) - 1);
  double v;
  if (e == 0) {
    v = std::ldexp(static_cast<double>(m), s.min_normal_exp - s.man_bits);
  } else {
    v = std::ldexp(static_cast<double>((1 << s.man_bits) + m),
                   e - s.bias - s.man_bits);
  }
  return neg ? -v : v;
}

std::uint8_t fp8_encode(double x, Fp8Format f) {
  const Fp8Spec s = spec_of(f);
  const double r = fp8_round(x, f);
  const std::uint8_t sign = std::signbit(r) ? 0x80 : 0x00;
  const double a = std::abs(r);
  if (a == 0.0) return sign;
  const int e = std::ilogb(a);
  int biased, man;
  if (e < s.min_normal_exp) {
    biased = 0;
    man = static_cast<int>(std::ldexp(a, s.man_bits - s.min_normal_exp));
  } else {
    biased = e + s.bias;
    man = static_cast<int>(std::ldexp(a, s.man_bits - e)) - (1 << s.man_bits);
  }
  return static_cast<std::uint8_t>(sign | (biased << s.man_bits) | man);
}

AccuracyReport compare_outputs(const Tensor& reference,
                               const Tensor& candidate) {
  require_same_shape(reference, candidate, "compare_outputs");
  AccuracyReport r;
  double dot = 0.0, na = 0.0, nb = 0.0, diff = 0.0, mag = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double a = reference[i], b = candidate[i];
    dot += a * b;
    na += a * a;
    nb += b * b;
    diff += std::abs(a - b);
    mag += std::abs(a);
    r.max_abs_err = std::max(r.max_abs_err, std::abs(a - b));
  }
  if (na == 0.0 && nb == 0.0) {
    r.cosine_similarity = 1.0;
  } else if (na == 0.0 || nb == 0.0) {
    r.cosine_similarity = 0.0;
  } else {
    r.cosine_similarity =
        std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
  }
  if (mag == 0.0) {
    r.relative_l1 = diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    r.relative_l1 = diff / mag;
  }
  return r;
}

namespace {

int bits_of(IntFormat f) { return f == IntFormat::kInt4 ? 4 : 8; }

// Round rows [seq, dim] of one head according to a P/V format.
void round_rows(double* x, std::size_t rows, std::size_t cols, FloatFormat f,
                std::size_t block_rows) {
  switch (f) {
    case FloatFormat::kFull:
      return;
    case FloatFormat::kFp8E4M3:
      for (std::size_t i = 0; i < rows * cols; ++i) x[i] = fp8_round(x[i], Fp8Format::kE4M3);
      return;
    case FloatFormat::kFp8E5M2:
      for (std::size_t i = 0; i < rows * cols; ++i) x[i] = fp8_round(x[i], Fp8Format::kE5M2);
      return;
    case FloatFormat::kInt8: {
      const auto blocks = quantize_symmetric(
          std::span<const double>(x, rows * cols), 8, block_rows * cols);
      const auto deq = dequantize(blocks);
      std::copy(deq.begin(), deq.end(), x);
      return;
    }
  }
}

struct QuantizedHead {
  std::vector<std::int16_t> codes;  // [rows, dim]
  std::vector<double> row_scale;    // per row, copied from its block
};

QuantizedHead quantize_head(const double* x, std::size_t rows, std::size_t dim,
                            int bits, std::size_t block_rows) {
  const auto blocks = quantize_symmetric(std::span<const double>(x, rows * dim),
                                         bits, block_rows * dim);
  QuantizedHead q;
  q.codes.reserve(rows * dim);
  q.row_scale.resize(rows);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    q.codes.insert(q.codes.end(), blocks[b].codes.begin(), blocks[b].codes.end());
    for (std::size_t r = b * block_rows; r < std::min(rows, (b + 1) * block_rows); ++r) {
      q.row_scale[r] = blocks[b].scale;
    }
  }
  return q;
}

void dequantize_inplace(double* x, std::size_t rows, std::size_t dim, int bits,
                        std::size_t block_rows) {
  const auto blocks = quantize_symmetric(std::span<const double>(x, rows * dim),
                                         bits, block_rows * dim);
  const auto deq = dequantize(blocks);
  std::copy(deq.begin(), deq.end(), x);
}

}  // namespace

Tensor sage_attention_output(const AttentionInputs& inp,
                             const QuantScheme& scheme) {
  inp.validate();
  scheme.validate();
  const std::size_t heads = inp.heads(), seq = inp.seq(),
                    seq_kv = inp.seq_kv(), dim = inp.head_dim(),
                    vdim = inp.v.dim(2);
  const double scale = inp.effective_scale();
  const std::size_t bs = scheme.block_size;
  // Smoothing shifts every logit row by q . mean(k); softmax drops that
  // constant, so the mean needs no compensation term.
  const Tensor keys = scheme.k_smoothing ? smooth_k(inp.k).centered : inp.k;
  const auto& kern = kernels::active();

  Tensor out({heads, seq, vdim});
  std::vector<double> logits(seq * seq_kv);
  std::vector<double> vbuf(seq_kv * vdim);
  for (std::size_t h = 0; h < heads; ++h) {
    const double* qh = inp.q.ptr() + h * seq * dim;
    const double* kh = keys.ptr() + h * seq_kv * dim;
    if (scheme.q_format != IntFormat::kFull &&
        scheme.k_format != IntFormat::kFull) {
      const QuantizedHead qq =
          quantize_head(qh, seq, dim, bits_of(scheme.q_format), bs);
      const QuantizedHead kq =
          quantize_head(kh, seq_kv, dim, bits_of(scheme.k_format), bs);
      for (std::size_t i = 0; i < seq; ++i) {
        const std::int16_t* qi = qq.codes.data() + i * dim;
        for (std::size_t j = 0; j < seq_kv; ++j) {
          const std::int64_t acc =
              kern.dot_i16(qi, kq.codes.data() + j * dim, dim);
          logits[i * seq_kv + j] = static_cast<double>(acc) * qq.row_scale[i] *
                                   kq.row_scale[j] * scale;
        }
      }
    } else {
      std::vector<double> qbuf(qh, qh + seq * dim);
      std::vector<double> kbuf(kh, kh + seq_kv * dim);
      if (scheme.q_format != IntFormat::kFull) {
        dequantize_inplace(qbuf.data(), seq, dim, bits_of(scheme.q_format), bs);
      }
      if (scheme.k_format != IntFormat::kFull) {
        dequantize_inplace(kbuf.data(), seq_kv, dim, bits_of(scheme.k_format), bs);
      }
      detail::attention_logits(qbuf.data(), kbuf.data(), seq, seq_kv, dim,
                               scale, logits.data());
    }
    softmax_rows_inplace(logits.data(), seq, seq_kv);
    round_rows(logits.data(), seq, seq_kv, scheme.p_format, bs);

    const double* vh = inp.v.ptr() + h * seq_kv * vdim;
    std::copy(vh, vh + seq_kv * vdim, vbuf.begin());
    round_rows(vbuf.data(), seq_kv, vdim, scheme.v_format, bs);
    detail::attention_pv(logits.data(), vbuf.data(), seq, seq_kv, vdim,
                         out.ptr() + h * seq * vdim);
  }
  return out;
}

SageResult sage_attention(const AttentionInputs& inp, const QuantScheme& scheme) {
  Tensor o = sage_attention_output(inp, scheme);
  const Tensor ref = attention_reference(inp);
  AccuracyReport rep = compare_outputs(ref, o);
  return {std::move(o), rep};
}

std::map<BlockKind, QuantScheme> recommend_scheme(
    std::span<const RangeStats> stats) {
  if (stats.empty()) {
    throw ConfigError("recommend_scheme: no range statistics supplied");
  }
  std::map<BlockKind, std::pair<double, std::size_t>> acc;
  for (const auto& s : stats) {
    auto& [sum, n] = acc[s.kind];
    sum += s.v.range();
    ++n;
  }
  std::map<BlockKind, double> mean_range;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& [kind, sn] : acc) {
    const double r = sn.first / static_cast<double>(sn.second);
    mean_range[kind] = r;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  const bool discriminate = mean_range.size() > 1 && hi >= kLowResRangeRatio * lo;
  std::map<BlockKind, QuantScheme> out;
  for (const auto& [kind, r] : mean_range) {
    QuantScheme s;
    if (discriminate && r == lo) s.v_format = FloatFormat::kFp8E5M2;
    out[kind] = s;
  }
  return out;
}

}  // namespace sf
