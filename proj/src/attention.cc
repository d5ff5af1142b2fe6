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

#include "sf/attention.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sf/error.h"
#include "sf/kernels.h"

namespace sf {

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::kSpatial:
      return "spatial";
    case BlockKind::kTemporal:
      return "temporal";
    case BlockKind::kCrossView:
      return "cross_view";
    case BlockKind::kCross:
      return "cross";
    case BlockKind::kOther:
      return "other";
  }
  return "other";
}

BlockKind parse_block_kind(std::string_view name) {
  for (BlockKind k : kAllBlockKinds) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown block kind '" + std::string(name) + "'");
}

double AttentionInputs::effective_scale() const {
  return scale.value_or(1.0 / std::sqrt(static_cast<double>(head_dim())));
}

void AttentionInputs::validate() const {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3) {
    throw DimensionError("attention: q, k, v must be [heads, seq, dim]");
  }
  if (q.dim(0) != k.dim(0) || q.dim(0) != v.dim(0)) {
    throw DimensionError("attention: head counts differ");
  }
  if (q.dim(2) != k.dim(2)) {
    throw DimensionError("attention: q and k head dims differ (" +
                         shape_str(q.shape()) + " vs " + shape_str(k.shape()) +
                         ")");
  }
  if (k.dim(1) != v.dim(1)) {
    throw DimensionError("attention: k and v sequence lengths differ");
  }
}

namespace detail {

void attention_logits(const double* q_head, const double* k_head,
                      std::size_t seq, std::size_t seq_kv, std::size_t dim,
                      double scale, double* logits) {
  std::vector<double> kt(dim * seq_kv);
  for (std::size_t j = 0; j < seq_kv; ++j)
    for (std::size_t d = 0; d < dim; ++d) kt[d * seq_kv + j] = k_head[j * dim + d];
  kernels::active().gemm(seq, seq_kv, dim, q_head, dim, kt.data(), seq_kv,
                         logits, seq_kv);
  for (std::size_t i = 0; i < seq * seq_kv; ++i) logits[i] *= scale;
}

void attention_pv(const double* p, const double* v_head, std::size_t seq,
                  std::size_t seq_kv, std::size_t dim, double* out) {
  kernels::active().gemm(seq, dim, seq_kv, p, seq_kv, v_head, dim, out, dim);
}

}  // namespace detail

Tensor attention_reference(const AttentionInputs& inp) {
  inp.validate();
  const std::size_t heads = inp.heads(), seq = inp.seq(),
                    seq_kv = inp.seq_kv(), dim = inp.head_dim(),
                    vdim = inp.v.dim(2);
  const double scale = inp.effective_scale();
  Tensor out({heads, seq, vdim});
  std::vector<double> logits(seq * seq_kv);
  for (std::size_t h = 0; h < heads; ++h) {
    detail::attention_logits(inp.q.ptr() + h * seq * dim,
                             inp.k.ptr() + h * seq_kv * dim, seq, seq_kv, dim,
                             scale, logits.data());
    softmax_rows_inplace(logits.data(), seq, seq_kv);
    detail::attention_pv(logits.data(), inp.v.ptr() + h * seq_kv * vdim, seq,
                         seq_kv, vdim, out.ptr() + h * seq * vdim);
  }
  return out;
}

TensorStats tensor_stats(std::span<const double> values) {
  TensorStats s;
  if (values.empty()) return s;
  s.min = values[0];
  s.max = values[0];
  double sum = 0.0;
  for (double v : values) {
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    sum += v;
  }
  s.mean = sum / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(values.size()));
  // Summation rounding can push the mean a hair outside [min, max] for
  // near-constant inputs.
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

}  // namespace sf
