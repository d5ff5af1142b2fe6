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

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

#include "sf/numerics.h"

namespace sf {

// Attention block taxonomy of the multiview video transformer. `kCross`
// attends from latent tokens to the conditioning sequence; `kCrossView`
// attends across camera views at a fixed frame and position. `kOther` marks a
// block without attention (feed-forward only).
enum class BlockKind { kSpatial, kTemporal, kCrossView, kCross, kOther };

inline constexpr std::array<BlockKind, 5> kAllBlockKinds = {
    BlockKind::kSpatial, BlockKind::kTemporal, BlockKind::kCrossView,
    BlockKind::kCross, BlockKind::kOther};

std::string_view to_string(BlockKind kind);
// Throws ConfigError on an unknown name.
BlockKind parse_block_kind(std::string_view name);

// q: [heads, seq, dim], k/v: [heads, seq_kv, dim].
struct AttentionInputs {
  Tensor q;
  Tensor k;
  Tensor v;
  std::optional<double> scale;  // defaults to 1/sqrt(dim)

  std::size_t heads() const { return q.dim(0); }
  std::size_t seq() const { return q.dim(1); }
  std::size_t seq_kv() const { return k.dim(1); }
  std::size_t head_dim() const { return q.dim(2); }
  double effective_scale() const;

  // Throws DimensionError when the shapes are inconsistent.
  void validate() const;
};

// softmax(q k^T * scale) v per head, in double precision.
Tensor attention_reference(const AttentionInputs& inp);

namespace detail {

// logits[seq, seq_kv] = q_head[seq, dim] * k_head[seq_kv, dim]^T * scale
void attention_logits(const double* q_head, const double* k_head,
                      std::size_t seq, std::size_t seq_kv, std::size_t dim,
                      double scale, double* logits);

// out[seq, dim] = p[seq, seq_kv] * v_head[seq_kv, dim]
void attention_pv(const double* p, const double* v_head, std::size_t seq,
                  std::size_t seq_kv, std::size_t dim, double* out);

}  // namespace detail

struct TensorStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double std = 0.0;

  double range() const { return max - min; }
};

TensorStats tensor_stats(std::span<const double> values);

// Q/K/V statistics of one attention block invocation.
struct RangeStats {
  BlockKind kind = BlockKind::kOther;
  std::size_t block_index = 0;
  TensorStats q;
  TensorStats k;
  TensorStats v;
};

}  // namespace sf
