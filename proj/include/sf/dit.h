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
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sf/attention.h"
#include "sf/image.h"
#include "sf/numerics.h"
#include "sf/quant_attention.h"

namespace sf {

struct DiTConfig {
  int num_views = 2;
  int frames = 8;
  int latent_height = 16;
  int latent_width = 32;
  int channels = 64;
  int heads = 4;
  int depth = 8;
  std::vector<BlockKind> block_pattern = {BlockKind::kSpatial,
                                          BlockKind::kTemporal,
                                          BlockKind::kCrossView,
                                          BlockKind::kCross};
  int steps = 20;
  double guidance_weight = 2.0;
  std::uint64_t seed = 42;
  int mlp_ratio = 2;
  int decoder_upsample = 4;

  // Throws ConfigError naming the offending key.
  void validate() const;

  std::size_t tokens() const {
    return static_cast<std::size_t>(frames) * num_views * latent_height *
           latent_width;
  }
  BlockKind block_kind(int block) const {
    return block_pattern[static_cast<std::size_t>(block) % block_pattern.size()];
  }
  int image_width() const { return latent_width * decoder_upsample; }
  int image_height() const { return latent_height * decoder_upsample; }
};

// Dense layer y = x * w + b with w stored [in, out].
struct Linear {
  Tensor w;
  std::vector<double> b;

  std::size_t in() const { return w.dim(0); }
  std::size_t out() const { return w.dim(1); }

  // x: [n, in] -> [n, out]
  Tensor operator()(const Tensor& x) const;
};

struct BlockWeights {
  BlockKind kind = BlockKind::kOther;
  Linear modulation;  // temb -> [shift | scale | gate], each `channels`
  Linear q, k, v, o;
  Linear mlp_in, mlp_out;
};

struct DiTWeights {
  Linear embed;     // latent channels -> model channels
  Linear time_in;   // sinusoidal features -> channels
  Linear time_out;  // channels -> channels
  std::vector<BlockWeights> blocks;
  Linear final_modulation;  // temb -> [shift | scale]
  Linear head;              // channels -> latent channels
  Linear decoder;           // latent channels -> RGB logits
  Tensor bev_projection;    // [classes, channels]
};

struct Conditioning {
  Tensor text_embedding;  // [text_tokens, channels]
  Tensor bev_raster;      // [classes, cells, cells]
  Tensor combined;        // [text_tokens + cells*cells, channels]

  // Same extents, all zeros: the unconditional CFG input.
  Conditioning null_like() const;
};

// Deterministic text stand-in: whitespace tokens are hashed (FNV-1a) into
// seeds, each seed draws one seeded_normal row. An empty prompt yields a
// single padding token.
Tensor encode_text_stub(const std::string& prompt, int channels);

struct BevBox {
  double center_x = 0.0;  // meters
  double center_y = 0.0;
  double width = 1.0;     // extent along the box x axis before yaw
  double length = 1.0;    // extent along the box y axis before yaw
  double yaw = 0.0;       // radians, counter-clockwise
  int class_id = 0;
};

struct BevGrid {
  double extent_m = 50.0;  // square side, centered at the origin
  int cells = 8;
  int classes = 4;
};

// [classes, cells, cells]; cell (row, col) covers y then x. A cell is set when
// its center lies inside the oriented box.
Tensor rasterize_bev(const std::vector<BevBox>& boxes, const BevGrid& grid);

// Per-invocation hooks. Timing and statistics consumers implement what they
// need; defaults ignore everything.
class ForwardObserver {
 public:
  virtual ~ForwardObserver() = default;
  virtual void on_attention(std::size_t /*block*/, BlockKind /*kind*/,
                            const Tensor& /*q*/, const Tensor& /*k*/,
                            const Tensor& /*v*/) {}
  virtual void on_block(std::size_t /*block*/, BlockKind /*kind*/,
                        double /*seconds*/) {}
};

struct ForwardContext {
  // Blocks of a listed kind run quantized attention; others run the reference.
  const std::map<BlockKind, QuantScheme>* schemes = nullptr;
  ForwardObserver* observer = nullptr;
  int step = -1;  // for error messages

  // Instrumentation: block invocations and attention-group calls per kind.
  std::array<std::size_t, 5> block_calls{};
  std::array<std::size_t, 5> group_calls{};
};

// x * (1 + scale) + shift, with [shift | scale | ...] = mod(silu(temb)).
// x: [n, channels], temb: [channels].
Tensor modulated_input(const Tensor& x, const Tensor& temb, const Linear& mod);

Tensor layer_norm_rows(const Tensor& x, double eps = 1e-6);

class DiTModel {
 public:
  // Seeded random weights; never trained.
  explicit DiTModel(const DiTConfig& config);

  const DiTConfig& config() const { return config_; }
  DiTWeights& weights() { return weights_; }
  const DiTWeights& weights() const { return weights_; }

  // z: [frames, views, channels, h, w] -> tokens [N, channels], token order
  // (frame, view, row, col).
  Tensor embed(const Tensor& z) const;

  // t in [0, 1]; sinusoidal features of 1000 t through a two-layer MLP.
  Tensor timestep_embedding(double t) const;

  // First block's modulated activation of layer-normed tokens; the step
  // cache measures input change here.
  Tensor first_block_modulated_input(const Tensor& tokens,
                                     const Tensor& temb) const;

  // All transformer blocks. cond_tokens: [M, channels].
  Tensor run_blocks(const Tensor& tokens, const Tensor& temb,
                    const Tensor& cond_tokens, ForwardContext& ctx) const;

  // Final modulation and projection back to a latent [F, V, C, H, W].
  Tensor head(const Tensor& hidden, const Tensor& temb) const;

  Tensor forward(const Tensor& z, double t, const Tensor& cond_tokens,
                 ForwardContext& ctx) const;

  // Linear decoder + bilinear upsample + sigmoid. Frame order f * views + v.
  std::vector<Image> decode(const Tensor& z) const;

  Conditioning make_conditioning(const std::string& prompt,
                                 const std::vector<BevBox>& boxes,
                                 const BevGrid& grid) const;

  // Number of attention groups a block of this kind runs per forward pass.
  std::size_t expected_groups(BlockKind kind) const;

 private:
  Tensor run_block(std::size_t index, const Tensor& x, const Tensor& temb,
                   const Tensor& cond_tokens, ForwardContext& ctx) const;
  Tensor attend(const BlockWeights& bw, std::size_t index, const Tensor& y,
                const Tensor& cond_tokens, ForwardContext& ctx) const;

  DiTConfig config_;
  DiTWeights weights_;
};

}  // namespace sf
