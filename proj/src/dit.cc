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

#include "sf/dit.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "sf/error.h"
#include "sf/kernels.h"

namespace sf {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                          std::uint64_t index = 0) {
  return splitmix(splitmix(seed ^ (tag * 0x100000001B3ull)) + index);
}

enum SeedTag : std::uint64_t {
  kTagEmbed = 1,
  kTagTimeIn,
  kTagTimeOut,
  kTagModulation,
  kTagQ,
  kTagK,
  kTagV,
  kTagO,
  kTagMlpIn,
  kTagMlpOut,
  kTagFinalMod,
  kTagHead,
  kTagDecoder,
  kTagBev,
};

Linear make_linear(std::size_t in, std::size_t out, double gain,
                   std::uint64_t seed) {
  Linear l;
  l.w = scale(seeded_normal({in, out}, seed),
              gain / std::sqrt(static_cast<double>(in)));
  l.b.assign(out, 0.0);
  return l;
}

void silu_inplace(Tensor& t) { kernels::active().silu(t.ptr(), t.size()); }

Tensor row_vector(const Tensor& v) { return v.reshaped({1, v.size()}); }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

void DiTConfig::validate() const {
  auto require = [](bool ok, const char* key, const std::string& what) {
    if (!ok) throw ConfigError(std::string("dit.") + key + ": " + what);
  };
  require(num_views >= 1, "num_views", "must be >= 1");
  require(frames >= 1, "frames", "must be >= 1");
  require(latent_height >= 1, "latent_height", "must be >= 1");
  require(latent_width >= 1, "latent_width", "must be >= 1");
  require(channels >= 2 && channels % 2 == 0, "channels",
          "must be a positive even number");
  require(heads >= 1, "heads", "must be >= 1");
  require(channels % std::max(heads, 1) == 0, "channels",
          "must be divisible by heads");
  require(depth >= 1, "depth", "must be >= 1");
  require(!block_pattern.empty(), "block_pattern", "must be non-empty");
  require(steps >= 0, "steps", "must be >= 0");
  require(guidance_weight >= 0.0 && std::isfinite(guidance_weight),
          "guidance_weight", "must be finite and >= 0");
  require(mlp_ratio >= 1, "mlp_ratio", "must be >= 1");
  require(decoder_upsample >= 1, "decoder_upsample", "must be >= 1");
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, w);
  const std::size_t n = y.dim(0), m = y.dim(1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) y[i * m + j] += b[j];
  return y;
}

Conditioning Conditioning::null_like() const {
  Conditioning c;
  c.text_embedding = Tensor(text_embedding.shape());
  c.bev_raster = Tensor(bev_raster.shape());
  c.combined = Tensor(combined.shape());
  return c;
}

Tensor encode_text_stub(const std::string& prompt, int channels) {
  std::istringstream in(prompt);
  std::vector<std::string> tokens;
  for (std::string tok; in >> tok;) tokens.push_back(tok);
  if (tokens.empty()) tokens.push_back("<pad>");
  const std::size_t c = static_cast<std::size_t>(channels);
  Tensor out({tokens.size(), c});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Tensor row = seeded_normal({c}, fnv1a(tokens[i]));
    std::copy(row.data().begin(), row.data().end(), out.ptr() + i * c);
  }
  return out;
}

Tensor rasterize_bev(const std::vector<BevBox>& boxes, const BevGrid& grid) {
  if (grid.cells < 1) throw ConfigError("bev.cells: must be >= 1");
  if (!(grid.extent_m > 0.0)) throw ConfigError("bev.extent_m: must be > 0");
  if (grid.classes < 1) throw ConfigError("bev.classes: must be >= 1");
  const std::size_t n = static_cast<std::size_t>(grid.cells);
  Tensor r({static_cast<std::size_t>(grid.classes), n, n});
  const double cell = grid.extent_m / grid.cells;
  const double origin = -0.5 * grid.extent_m;
  for (const BevBox& b : boxes) {
    if (b.class_id < 0 || b.class_id >= grid.classes) {
      throw ConfigError("bev.boxes: class_id " + std::to_string(b.class_id) +
                        " outside [0, " + std::to_string(grid.classes) + ")");
    }
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    double* plane = r.ptr() + static_cast<std::size_t>(b.class_id) * n * n;
    for (std::size_t row = 0; row < n; ++row) {
      const double y = origin + (static_cast<double>(row) + 0.5) * cell;
      for (std::size_t col = 0; col < n; ++col) {
        const double x = origin + (static_cast<double>(col) + 0.5) * cell;
        const double dx = x - b.center_x, dy = y - b.center_y;
        const double lx = c * dx + s * dy;
        const double ly = -s * dx + c * dy;
        if (std::abs(lx) <= 0.5 * b.width && std::abs(ly) <= 0.5 * b.length) {
          plane[row * n + col] = 1.0;
        }
      }
    }
  }
  return r;
}

Tensor layer_norm_rows(const Tensor& x, double eps) {
  Tensor y = x;
  const std::size_t n = x.dim(0), c = x.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = y.ptr() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) row[j] = (row[j] - mean) * inv;
  }
  return y;
}

namespace {

// Applies x * (1 + scale) + shift in place; mod holds [shift | scale | ...].
void apply_modulation(Tensor& x, const double* shift, const double* scl) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = x.ptr() + i * c;
    for (std::size_t j = 0; j < c; ++j) row[j] = row[j] * (1.0 + scl[j]) + shift[j];
  }
}

Tensor modulation_params(const Linear& mod, const Tensor& temb) {
  Tensor act = row_vector(temb);
  silu_inplace(act);
  return mod(act);
}

}  // namespace

Tensor modulated_input(const Tensor& x, const Tensor& temb, const Linear& mod) {
  if (x.rank() != 2) throw DimensionError("modulated_input: x must be [n, c]");
  const std::size_t c = x.dim(1);
  if (temb.size() != mod.in() || mod.out() < 2 * c) {
    throw DimensionError("modulated_input: embedding " +
                         shape_str(temb.shape()) +
                         " incompatible with modulation layer [" +
                         std::to_string(mod.in()) + ", " +
                         std::to_string(mod.out()) + "] for channels " +
                         std::to_string(c));
  }
  const Tensor p = modulation_params(mod, temb);
  Tensor y = x;
  apply_modulation(y, p.ptr(), p.ptr() + c);
  return y;
}

DiTModel::DiTModel(const DiTConfig& config) : config_(config) {
  config_.validate();
  const std::size_t c = static_cast<std::size_t>(config_.channels);
  const std::size_t hidden = c * static_cast<std::size_t>(config_.mlp_ratio);
  const std::uint64_t s = config_.seed;
  weights_.embed = make_linear(c, c, 1.0, derive_seed(s, kTagEmbed));
  weights_.time_in = make_linear(c, c, 1.0, derive_seed(s, kTagTimeIn));
  weights_.time_out = make_linear(c, c, 1.0, derive_seed(s, kTagTimeOut));
  for (int i = 0; i < config_.depth; ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    BlockWeights b;
    b.kind = config_.block_kind(i);
    b.modulation = make_linear(c, 3 * c, 0.5, derive_seed(s, kTagModulation, idx));
    b.q = make_linear(c, c, 1.0, derive_seed(s, kTagQ, idx));
    b.k = make_linear(c, c, 1.0, derive_seed(s, kTagK, idx));
    b.v = make_linear(c, c, 1.0, derive_seed(s, kTagV, idx));
    b.o = make_linear(c, c, 1.0, derive_seed(s, kTagO, idx));
    b.mlp_in = make_linear(c, hidden, 1.0, derive_seed(s, kTagMlpIn, idx));
    b.mlp_out = make_linear(hidden, c, 0.5, derive_seed(s, kTagMlpOut, idx));
    weights_.blocks.push_back(std::move(b));
  }
  weights_.final_modulation =
      make_linear(c, 2 * c, 0.5, derive_seed(s, kTagFinalMod));
  weights_.head = make_linear(c, c, 1.0, derive_seed(s, kTagHead));
  weights_.decoder = make_linear(c, 3, 1.0, derive_seed(s, kTagDecoder));
}

Tensor DiTModel::embed(const Tensor& z) const {
  const auto& cf = config_;
  const Shape expect = {static_cast<std::size_t>(cf.frames),
                        static_cast<std::size_t>(cf.num_views),
                        static_cast<std::size_t>(cf.channels),
                        static_cast<std::size_t>(cf.latent_height),
                        static_cast<std::size_t>(cf.latent_width)};
  if (z.shape() != expect) {
    throw DimensionError("latent shape " + shape_str(z.shape()) +
                         " does not match config " + shape_str(expect));
  }
  const std::size_t fv = expect[0] * expect[1], c = expect[2],
                    hw = expect[3] * expect[4];
  Tensor tokens({fv * hw, c});
  for (std::size_t g = 0; g < fv; ++g)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p)
        tokens[(g * hw + p) * c + ch] = z[(g * c + ch) * hw + p];
  return weights_.embed(tokens);
}

Tensor DiTModel::timestep_embedding(double t) const {
  const std::size_t c = static_cast<std::size_t>(config_.channels);
  const std::size_t half = c / 2;
  Tensor feat({1, c});
  const double pos = 1000.0 * t;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    feat[i] = std::cos(pos * freq);
    feat[half + i] = std::sin(pos * freq);
  }
  Tensor h = weights_.time_in(feat);
  silu_inplace(h);
  return weights_.time_out(h).reshaped({c});
}

Tensor DiTModel::first_block_modulated_input(const Tensor& tokens,
                                             const Tensor& temb) const {
  return modulated_input(layer_norm_rows(tokens), temb,
                         weights_.blocks.front().modulation);
}

std::size_t DiTModel::expected_groups(BlockKind kind) const {
  const std::size_t f = static_cast<std::size_t>(config_.frames);
  const std::size_t v = static_cast<std::size_t>(config_.num_views);
  const std::size_t hw = static_cast<std::size_t>(config_.latent_height) *
                         static_cast<std::size_t>(config_.latent_width);
  switch (kind) {
    case BlockKind::kSpatial:
      return f * v;
    case BlockKind::kTemporal:
      return v * hw;
    case BlockKind::kCrossView:
      return f * hw;
    case BlockKind::kCross:
      return 1;
    case BlockKind::kOther:
      return 0;
  }
  return 0;
}

Tensor DiTModel::attend(const BlockWeights& bw, std::size_t index,
                        const Tensor& y, const Tensor& cond_tokens,
                        ForwardContext& ctx) const {
  const std::size_t c = static_cast<std::size_t>(config_.channels);
  const std::size_t heads = static_cast<std::size_t>(config_.heads);
  const std::size_t d = c / heads;
  const std::size_t f = static_cast<std::size_t>(config_.frames);
  const std::size_t v = static_cast<std::size_t>(config_.num_views);
  const std::size_t hw = static_cast<std::size_t>(config_.latent_height) *
                         static_cast<std::size_t>(config_.latent_width);
  const bool cross = bw.kind == BlockKind::kCross;

  const Tensor q = bw.q(y);
  const Tensor k = bw.k(cross ? cond_tokens : y);
  const Tensor val = bw.v(cross ? cond_tokens : y);
  if (ctx.observer) ctx.observer->on_attention(index, bw.kind, q, k, val);

  const QuantScheme* scheme = nullptr;
  if (ctx.schemes) {
    auto it = ctx.schemes->find(bw.kind);
    if (it != ctx.schemes->end()) scheme = &it->second;
  }

  // Token index of (frame, view, pos) is (frame * v + view) * hw + pos.
  std::vector<std::vector<std::size_t>> groups;
  switch (bw.kind) {
    case BlockKind::kSpatial:
      for (std::size_t g = 0; g < f * v; ++g) {
        std::vector<std::size_t> idx(hw);
        for (std::size_t p = 0; p < hw; ++p) idx[p] = g * hw + p;
        groups.push_back(std::move(idx));
      }
      break;
    case BlockKind::kTemporal:
      for (std::size_t view = 0; view < v; ++view)
        for (std::size_t p = 0; p < hw; ++p) {
          std::vector<std::size_t> idx(f);
          for (std::size_t fr = 0; fr < f; ++fr) idx[fr] = (fr * v + view) * hw + p;
          groups.push_back(std::move(idx));
        }
      break;
    case BlockKind::kCrossView:
      for (std::size_t fr = 0; fr < f; ++fr)
        for (std::size_t p = 0; p < hw; ++p) {
          std::vector<std::size_t> idx(v);
          for (std::size_t view = 0; view < v; ++view) idx[view] = (fr * v + view) * hw + p;
          groups.push_back(std::move(idx));
        }
      break;
    case BlockKind::kCross: {
      std::vector<std::size_t> idx(q.dim(0));
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      groups.push_back(std::move(idx));
      break;
    }
    case BlockKind::kOther:
      break;
  }

  auto gather = [&](const Tensor& src, const std::vector<std::size_t>& idx) {
    Tensor t({heads, idx.size(), d});
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t s = 0; s < idx.size(); ++s) {
        const double* from = src.ptr() + idx[s] * c + h * d;
        std::copy(from, from + d, t.ptr() + (h * idx.size() + s) * d);
      }
    return t;
  };

  std::vector<std::size_t> kv_all;
  if (cross) {
    kv_all.resize(cond_tokens.dim(0));
    for (std::size_t i = 0; i < kv_all.size(); ++i) kv_all[i] = i;
  }

  Tensor merged({q.dim(0), c});
  for (const auto& idx : groups) {
    AttentionInputs inp{gather(q, idx), gather(k, cross ? kv_all : idx),
                        gather(val, cross ? kv_all : idx), std::nullopt};
    const Tensor o = scheme ? sage_attention_output(inp, *scheme)
                            : attention_reference(inp);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t s = 0; s < idx.size(); ++s) {
        const double* from = o.ptr() + (h * idx.size() + s) * d;
        std::copy(from, from + d, merged.ptr() + idx[s] * c + h * d);
      }
    ++ctx.group_calls[static_cast<std::size_t>(bw.kind)];
  }
  return bw.o(merged);
}

Tensor DiTModel::run_block(std::size_t index, const Tensor& x_in,
                           const Tensor& temb, const Tensor& cond_tokens,
                           ForwardContext& ctx) const {
  const BlockWeights& bw = weights_.blocks[index];
  const std::size_t c = static_cast<std::size_t>(config_.channels);
  const std::size_t n = x_in.dim(0);
  const Tensor p = modulation_params(bw.modulation, temb);
  const double* shift = p.ptr();
  const double* scl = p.ptr() + c;
  const double* gate = p.ptr() + 2 * c;

  Tensor x = x_in;
  if (bw.kind != BlockKind::kOther) {
    Tensor y = layer_norm_rows(x);
    apply_modulation(y, shift, scl);
    const Tensor a = attend(bw, index, y, cond_tokens, ctx);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) x[i * c + j] += gate[j] * a[i * c + j];
  }
  Tensor h = bw.mlp_in(layer_norm_rows(x));
  silu_inplace(h);
  const Tensor m = bw.mlp_out(h);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += m[i];
  ++ctx.block_calls[static_cast<std::size_t>(bw.kind)];

  if (!x.all_finite()) {
    throw NumericError("non-finite activations at step " +
                       std::to_string(ctx.step) + ", block " +
                       std::to_string(index) + " (" +
                       std::string(to_string(bw.kind)) + ")");
  }
  return x;
}

Tensor DiTModel::run_blocks(const Tensor& tokens, const Tensor& temb,
                            const Tensor& cond_tokens,
                            ForwardContext& ctx) const {
  if (cond_tokens.rank() != 2 ||
      cond_tokens.dim(1) != static_cast<std::size_t>(config_.channels)) {
    throw DimensionError("conditioning tokens must be [M, channels], got " +
                         shape_str(cond_tokens.shape()));
  }
  Tensor x = tokens;
  for (std::size_t i = 0; i < weights_.blocks.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    x = run_block(i, x, temb, cond_tokens, ctx);
    if (ctx.observer) {
      const std::chrono::duration<double> dt =
          std::chrono::steady_clock::now() - t0;
      ctx.observer->on_block(i, weights_.blocks[i].kind, dt.count());
    }
  }
  return x;
}

Tensor DiTModel::head(const Tensor& hidden, const Tensor& temb) const {
  const auto& cf = config_;
  const std::size_t c = static_cast<std::size_t>(cf.channels);
  const Tensor p = modulation_params(weights_.final_modulation, temb);
  Tensor y = layer_norm_rows(hidden);
  apply_modulation(y, p.ptr(), p.ptr() + c);
  const Tensor out = weights_.head(y);
  const std::size_t fv = static_cast<std::size_t>(cf.frames) * cf.num_views;
  const std::size_t hw = static_cast<std::size_t>(cf.latent_height) * cf.latent_width;
  Tensor z({static_cast<std::size_t>(cf.frames),
            static_cast<std::size_t>(cf.num_views), c,
            static_cast<std::size_t>(cf.latent_height),
            static_cast<std::size_t>(cf.latent_width)});
  for (std::size_t g = 0; g < fv; ++g)
    for (std::size_t pos = 0; pos < hw; ++pos)
      for (std::size_t ch = 0; ch < c; ++ch)
        z[(g * c + ch) * hw + pos] = out[(g * hw + pos) * c + ch];
  return z;
}

Tensor DiTModel::forward(const Tensor& z, double t, const Tensor& cond_tokens,
                         ForwardContext& ctx) const {
  const Tensor temb = timestep_embedding(t);
  return head(run_blocks(embed(z), temb, cond_tokens, ctx), temb);
}

std::vector<Image> DiTModel::decode(const Tensor& z) const {
  const auto& cf = config_;
  const std::size_t c = static_cast<std::size_t>(cf.channels);
  const int lh = cf.latent_height, lw = cf.latent_width, up = cf.decoder_upsample;
  const std::size_t hw = static_cast<std::size_t>(lh) * lw;
  const std::size_t fv = static_cast<std::size_t>(cf.frames) * cf.num_views;
  std::vector<Image> frames;
  frames.reserve(fv);
  for (std::size_t g = 0; g < fv; ++g) {
    Tensor pix({hw, c});
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) pix[p * c + ch] = z[(g * c + ch) * hw + p];
    const Tensor logits = weights_.decoder(pix);  // [hw, 3]
    Image img(lw * up, lh * up);
    for (int y = 0; y < img.height; ++y) {
      const double sy = std::clamp((y + 0.5) / up - 0.5, 0.0, lh - 1.0);
      const int y0 = static_cast<int>(std::floor(sy));
      const int y1 = std::min(y0 + 1, lh - 1);
      const double fy = sy - y0;
      for (int x = 0; x < img.width; ++x) {
        const double sx = std::clamp((x + 0.5) / up - 0.5, 0.0, lw - 1.0);
        const int x0 = static_cast<int>(std::floor(sx));
        const int x1 = std::min(x0 + 1, lw - 1);
        const double fx = sx - x0;
        for (int ch = 0; ch < 3; ++ch) {
          auto at = [&](int yy, int xx) {
            return logits[(static_cast<std::size_t>(yy) * lw + xx) * 3 + ch];
          };
          const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                           fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
          img.at(x, y, ch) = 1.0 / (1.0 + std::exp(-v));
        }
      }
    }
    frames.push_back(std::move(img));
  }
  return frames;
}

Conditioning DiTModel::make_conditioning(const std::string& prompt,
                                         const std::vector<BevBox>& boxes,
                                         const BevGrid& grid) const {
  const std::size_t c = static_cast<std::size_t>(config_.channels);
  Conditioning cond;
  cond.text_embedding = encode_text_stub(prompt, config_.channels);
  cond.bev_raster = rasterize_bev(boxes, grid);
  const std::size_t classes = static_cast<std::size_t>(grid.classes);
  const std::size_t cells = static_cast<std::size_t>(grid.cells) * grid.cells;
  Tensor bev_tokens({cells, classes});
  for (std::size_t k = 0; k < classes; ++k)
    for (std::size_t i = 0; i < cells; ++i)
      bev_tokens[i * classes + k] = cond.bev_raster[k * cells + i];
  const Tensor proj = seeded_normal({classes, c}, derive_seed(config_.seed, kTagBev));
  const Tensor bev = matmul(bev_tokens, proj);
  const std::size_t text = cond.text_embedding.dim(0);
  cond.combined = Tensor({text + cells, c});
  std::copy(cond.text_embedding.data().begin(), cond.text_embedding.data().end(),
            cond.combined.ptr());
  std::copy(bev.data().begin(), bev.data().end(), cond.combined.ptr() + text * c);
  return cond;
}

}  // namespace sf
