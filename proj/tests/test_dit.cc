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
#include <numbers>

#include "sf/error.h"
#include "sf/sampler.h"
#include "test_util.h"

using namespace sf;

namespace {

// Brute-force cell-center containment, independent of the library's loop.
bool inside(const BevBox& b, double x, double y) {
  const double dx = x - b.center_x, dy = y - b.center_y;
  const double lx = dx * std::cos(-b.yaw) - dy * std::sin(-b.yaw);
  const double ly = dx * std::sin(-b.yaw) + dy * std::cos(-b.yaw);
  return std::abs(lx) <= b.width / 2 && std::abs(ly) <= b.length / 2;
}

}  // namespace

TEST_CASE("text stub") {
  const Tensor a = encode_text_stub("a rainy city street", 32);
  CHECK(a == encode_text_stub("a rainy city street", 32));
  CHECK(a.shape() == Shape{4, 32});
  CHECK(!(a == encode_text_stub("a sunny city street", 32)));
  CHECK(encode_text_stub("", 32).shape() == Shape{1, 32});

  std::string many;
  for (int i = 0; i < 100; ++i) many += "word" + std::to_string(i) + " ";
  const Tensor e = encode_text_stub(many, 64);
  double mean = 0.0, var = 0.0;
  for (double v : e.data()) mean += v;
  mean /= e.size();
  for (double v : e.data()) var += (v - mean) * (v - mean);
  var /= e.size();
  CHECK(std::abs(mean) <= 0.05);
  CHECK(std::abs(var - 1.0) <= 0.1);
}

TEST_CASE("bev raster") {
  BevGrid g{2.0, 4, 3};
  const Tensor empty = rasterize_bev({}, g);
  CHECK(empty.shape() == Shape{3, 4, 4});
  for (double v : empty.data()) CHECK(v == 0.0);

  const Tensor unit = rasterize_bev({{0.0, 0.0, 1.0, 1.0, 0.0, 2}}, g);
  double total = 0.0;
  for (double v : unit.data()) total += v;
  CHECK(total == 4.0);
  for (int r = 1; r <= 2; ++r)
    for (int c = 1; c <= 2; ++c) CHECK(unit[2 * 16 + r * 4 + c] == 1.0);

  BevGrid fine{20.0, 40, 2};
  const BevBox box{0.37, -0.61, 3.3, 7.7, 0.0, 1};
  BevBox turned = box;
  turned.yaw = std::numbers::pi / 2;
  std::swap(turned.width, turned.length);
  const Tensor a = rasterize_bev({box}, fine);
  const Tensor b = rasterize_bev({turned}, fine);
  CHECK(a == b);

  const BevBox skew{-2.1, 3.3, 2.5, 5.0, 0.6, 0};
  const Tensor s = rasterize_bev({skew}, fine);
  for (int r = 0; r < 40; ++r)
    for (int c = 0; c < 40; ++c) {
      const double x = -10.0 + (c + 0.5) * 0.5, y = -10.0 + (r + 0.5) * 0.5;
      CHECK(s[r * 40 + c] == (inside(skew, x, y) ? 1.0 : 0.0));
    }

  // Entirely outside the grid: clipped away.
  const Tensor far = rasterize_bev({{500.0, 500.0, 2.0, 2.0, 0.0, 0}}, fine);
  for (double v : far.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(rasterize_bev({{0, 0, 1, 1, 0, 7}}, fine), ConfigError);
}

TEST_CASE("conditioning layout") {
  const DiTModel model(testing::tiny_dit());
  const BevGrid g{50.0, 6, 4};
  const Conditioning c = model.make_conditioning("two words", {{0, 0, 5, 5, 0, 1}}, g);
  CHECK(c.combined.dim(0) == c.text_embedding.dim(0) + 36);
  CHECK(c.combined.dim(1) == 16u);
  const Conditioning null = c.null_like();
  for (double v : null.combined.data()) CHECK(v == 0.0);
}

TEST_CASE("config validation names the key") {
  DiTConfig c = testing::tiny_dit();
  c.heads = 3;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("dit.channels"), ConfigError);
  c = testing::tiny_dit();
  c.block_pattern.clear();
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("dit.block_pattern"), ConfigError);
  c = testing::tiny_dit();
  c.guidance_weight = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("every block kind runs the expected number of groups") {
  const DiTConfig cfg = testing::tiny_dit();
  const DiTModel model(cfg);
  const Conditioning cond = model.make_conditioning("x", {}, BevGrid{});
  ForwardContext ctx;
  const Tensor out = model.forward(initial_noise(cfg), 0.5, cond.combined, ctx);
  CHECK(out.shape() == initial_noise(cfg).shape());
  for (BlockKind k : kAllBlockKinds) {
    std::size_t blocks = 0;
    for (int b = 0; b < cfg.depth; ++b) blocks += cfg.block_kind(b) == k;
    const auto i = static_cast<std::size_t>(k);
    CHECK(ctx.block_calls[i] == blocks);
    CHECK(ctx.group_calls[i] == blocks * model.expected_groups(k));
  }
  const std::size_t F = cfg.frames, V = cfg.num_views, HW = cfg.latent_height * cfg.latent_width;
  CHECK(model.expected_groups(BlockKind::kSpatial) == F * V);
  CHECK(model.expected_groups(BlockKind::kTemporal) == V * HW);
  CHECK(model.expected_groups(BlockKind::kCrossView) == F * HW);
  CHECK(model.expected_groups(BlockKind::kOther) == 0);
}

TEST_CASE("guidance edge cases") {
  DiTConfig cfg = testing::tiny_dit();
  const auto policy = CachePolicy::disabled(cfg.steps);
  const Tensor z = initial_noise(cfg);

  cfg.guidance_weight = 0.0;
  {
    const DiTModel model(cfg);
    const Conditioning a = model.make_conditioning("left", {}, BevGrid{});
    const Conditioning b = model.make_conditioning("right turn ahead", {{1, 1, 4, 4, 0, 2}}, BevGrid{});
    CacheState s1, s2;
    ForwardContext ctx;
    CHECK(denoise_step(model, z, 0, a, a.null_like(), policy, s1, ctx) ==
          denoise_step(model, z, 0, b, b.null_like(), policy, s2, ctx));
  }
  cfg.guidance_weight = 1.0;
  {
    const DiTModel model(cfg);
    const Conditioning a = model.make_conditioning("left", {}, BevGrid{});
    CacheState st;
    ForwardContext ctx;
    const Tensor next = denoise_step(model, z, 2, a, a.null_like(), policy, st, ctx);
    const Tensor c = model.forward(z, schedule_time(2, cfg.steps), a.combined, ctx);
    Tensor expect = z;
    for (std::size_t i = 0; i < z.size(); ++i) expect[i] += c[i] * (1.0 / cfg.steps);
    CHECK(next == expect);
  }
}

TEST_CASE("zero threshold equals disabled caching") {
  const DiTConfig cfg = testing::tiny_dit();
  const DiTModel model(cfg);
  const Conditioning c = model.make_conditioning("road", {}, BevGrid{});
  const auto zero = CachePolicy::make(BranchMode::kConditionOnly, 0.0,
                                      default_rescale_polynomial(), cfg.steps);
  CHECK(sample(model, c, zero).latent ==
        sample(model, c, CachePolicy::disabled(cfg.steps)).latent);
}

TEST_CASE("one Euler step by hand") {
  DiTConfig cfg = testing::tiny_dit();
  cfg.steps = 1;
  const DiTModel model(cfg);
  const Conditioning c = model.make_conditioning("road", {}, BevGrid{});
  const Tensor z0 = initial_noise(cfg);
  ForwardContext ctx;
  const Tensor co = model.forward(z0, 1.0, c.combined, ctx);
  const Tensor uo = model.forward(z0, 1.0, c.null_like().combined, ctx);
  const double w = cfg.guidance_weight;
  const SampleResult r = sample(model, c, CachePolicy::disabled(1));
  for (std::size_t i = 0; i < z0.size(); ++i) {
    const double v = uo[i] + w * (co[i] - uo[i]);
    CHECK(std::abs(r.latent[i] - (z0[i] + v)) <= 1e-12 * (1 + std::abs(v)));
  }
  CHECK(schedule_time(0, 4) == 1.0);
  CHECK(schedule_time(3, 4) == 0.25);
}

TEST_CASE("sampling is deterministic and decodes every frame") {
  const DiTConfig cfg = testing::tiny_dit();
  const DiTModel model(cfg);
  const Conditioning c = model.make_conditioning("road", {}, BevGrid{});
  const SampleResult a = sample(model, c, CachePolicy::make(BranchMode::kConditionOnly, 0.3, Polynomial::identity(), cfg.steps));
  const SampleResult b = sample(model, c, CachePolicy::make(BranchMode::kConditionOnly, 0.3, Polynomial::identity(), cfg.steps));
  CHECK(a.latent == b.latent);
  REQUIRE(a.frames.size() == static_cast<std::size_t>(cfg.frames * cfg.num_views));
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    CHECK(a.frames[i] == b.frames[i]);
    CHECK(a.frames[i].width == cfg.image_width());
    CHECK(a.frames[i].height == cfg.image_height());
    for (double v : a.frames[i].rgb) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("zero steps decode the initial noise") {
  DiTConfig cfg = testing::tiny_dit();
  cfg.steps = 0;
  const DiTModel model(cfg);
  const Conditioning c = model.make_conditioning("road", {}, BevGrid{});
  const SampleResult r = sample(model, c, CachePolicy::disabled(0));
  CHECK(r.latent == initial_noise(cfg));
  CHECK(r.frames == model.decode(initial_noise(cfg)));
}

TEST_CASE("latents stay finite across seeds") {
  DiTConfig cfg = testing::tiny_dit();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    cfg.seed = seed;
    const DiTModel model(cfg);
    const Conditioning c = model.make_conditioning("road", {}, BevGrid{});
    SampleOptions opts;
    bool finite = true;
    opts.on_branch_output = [&](int, Branch, const Tensor& z, const Tensor& out) {
      finite = finite && z.all_finite() && out.all_finite();
    };
    const CachePolicy policy = CachePolicy::make(
        BranchMode::kConditionOnly, kDefaultCacheThreshold,
        default_rescale_polynomial(), cfg.steps);
    CHECK(sample(model, c, policy, opts).latent.all_finite());
    CHECK(finite);
  }
}

TEST_CASE("non-finite activations are reported with the step") {
  DiTModel model(testing::tiny_dit());
  model.weights().head.b[0] = std::numeric_limits<double>::quiet_NaN();
  const Conditioning c = model.make_conditioning("road", {}, BevGrid{});
  CHECK_THROWS_WITH_AS(sample(model, c, CachePolicy::disabled(6)),
                       doctest::Contains("step 0"), NumericError);

  DiTModel blocky(testing::tiny_dit());
  blocky.weights().blocks[2].mlp_out.b[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_WITH_AS(sample(blocky, c, CachePolicy::disabled(6)),
                       doctest::Contains("step 0, block 2"), NumericError);
}
