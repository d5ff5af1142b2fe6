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

#include "sf/sampler.h"

#include <chrono>
#include <cmath>

#include "sf/error.h"

namespace sf {
namespace {

constexpr std::uint64_t kNoiseSalt = 0x6E6F697365ull;  // "noise"

class TimingObserver : public ForwardObserver {
 public:
  explicit TimingObserver(ForwardObserver* inner) : inner_(inner) {}

  void on_attention(std::size_t block, BlockKind kind, const Tensor& q,
                    const Tensor& k, const Tensor& v) override {
    if (inner_) inner_->on_attention(block, kind, q, k, v);
  }
  void on_block(std::size_t block, BlockKind kind, double seconds) override {
    seconds_[kind] += seconds;
    if (inner_) inner_->on_block(block, kind, seconds);
  }

  const std::map<BlockKind, double>& seconds() const { return seconds_; }

 private:
  ForwardObserver* inner_;
  std::map<BlockKind, double> seconds_;
};

struct AbsSums {
  double diff = 0.0;
  double ref = 0.0;
};

AbsSums abs_sums(const Tensor& prev, const Tensor& cur) {
  AbsSums s;
  for (std::size_t i = 0; i < prev.size(); ++i) {
    s.diff += std::abs(cur[i] - prev[i]);
    s.ref += std::abs(prev[i]);
  }
  return s;
}

double ratio(const AbsSums& s) {
  if (s.ref == 0.0) throw DegenerateReferenceError("trace: all-zero reference");
  return s.diff / s.ref;
}

}  // namespace

double schedule_time(int step, int steps) {
  return 1.0 - static_cast<double>(step) / static_cast<double>(steps);
}

Tensor initial_noise(const DiTConfig& c) {
  return seeded_normal({static_cast<std::size_t>(c.frames),
                        static_cast<std::size_t>(c.num_views),
                        static_cast<std::size_t>(c.channels),
                        static_cast<std::size_t>(c.latent_height),
                        static_cast<std::size_t>(c.latent_width)},
                       c.seed ^ kNoiseSalt);
}

Tensor cfg_combine(const Tensor& cond_out, const Tensor& uncond_out, double w) {
  require_same_shape(cond_out, uncond_out, "cfg_combine");
  Tensor v = cond_out;
  const double u = 1.0 - w;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = w * cond_out[i] + u * uncond_out[i];
  return v;
}

Tensor euler_update(const Tensor& z, const Tensor& velocity, double dt) {
  require_same_shape(z, velocity, "euler_update");
  Tensor out = z;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += velocity[i] * dt;
  return out;
}

Tensor denoise_step(const DiTModel& model, const Tensor& z, int step,
                    const Conditioning& cond, const Conditioning& uncond,
                    const CachePolicy& policy, CacheState& state,
                    ForwardContext& ctx, const SampleOptions& opts) {
  const int steps = model.config().steps;
  if (step < 0 || step >= steps) {
    throw RangeError("denoise_step: step " + std::to_string(step) +
                     " outside [0, " + std::to_string(steps) + ")");
  }
  ctx.step = step;
  const double t = schedule_time(step, steps);
  const Tensor c_out = cached_forward(model, z, t, cond.combined,
                                      Branch::kCondition, step, state, policy, ctx);
  if (opts.on_branch_output) opts.on_branch_output(step, Branch::kCondition, z, c_out);
  const Tensor u_out = cached_forward(model, z, t, uncond.combined,
                                      Branch::kUncondition, step, state, policy, ctx);
  if (opts.on_branch_output) opts.on_branch_output(step, Branch::kUncondition, z, u_out);
  const Tensor v = cfg_combine(c_out, u_out, model.config().guidance_weight);
  Tensor next = euler_update(z, v, 1.0 / steps);
  if (!next.all_finite()) {
    throw NumericError("non-finite latent after step " + std::to_string(step));
  }
  return next;
}

SampleResult sample(const DiTModel& model, const Conditioning& cond,
                    const CachePolicy& policy, const SampleOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const int steps = model.config().steps;
  policy.validate(steps);
  TimingObserver timing(opts.observer);
  ForwardContext ctx;
  ctx.schemes = opts.schemes;
  ctx.observer = &timing;

  const Conditioning uncond = cond.null_like();
  CacheState state;
  Tensor z = initial_noise(model.config());
  for (int s = 0; s < steps; ++s) {
    z = denoise_step(model, z, s, cond, uncond, policy, state, ctx, opts);
  }
  SampleResult r;
  r.frames = model.decode(z);
  r.latent = std::move(z);
  r.report.steps = steps;
  for (Branch b : {Branch::kCondition, Branch::kUncondition}) {
    auto& out = r.report.branches[static_cast<int>(b)];
    out.computed_steps = state.at(b).computed_steps;
    out.reused_steps = state.at(b).reused_steps;
  }
  r.report.block_seconds = timing.seconds();
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  r.report.total_seconds = dt.count();
  return r;
}

CalibrationTrace record_trace(const DiTModel& model, const Conditioning& cond,
                              const SampleOptions& opts) {
  const int steps = model.config().steps;
  const double w = model.config().guidance_weight;
  ForwardContext ctx;
  ctx.schemes = opts.schemes;
  ctx.observer = opts.observer;
  const Conditioning uncond = cond.null_like();

  CalibrationTrace trace;
  std::optional<Tensor> prev_in[2], prev_out[2];
  Tensor z = initial_noise(model.config());
  for (int s = 0; s < steps; ++s) {
    ctx.step = s;
    const double t = schedule_time(s, steps);
    const Tensor tokens = model.embed(z);
    const Tensor temb = model.timestep_embedding(t);
    const Tensor mod = model.first_block_modulated_input(tokens, temb);
    Tensor outs[2];
    outs[0] = model.head(model.run_blocks(tokens, temb, cond.combined, ctx), temb);
    outs[1] = model.head(model.run_blocks(tokens, temb, uncond.combined, ctx), temb);
    // The branches share the latent and the timestep, so their modulated
    // inputs coincide.
    if (s > 0) {
      AbsSums in_all, out_all;
      for (int b = 0; b < 2; ++b) {
        const AbsSums si = abs_sums(*prev_in[b], mod);
        const AbsSums so = abs_sums(*prev_out[b], outs[b]);
        trace.points.push_back({s,
                                b == 0 ? TraceBranch::kCondition
                                       : TraceBranch::kUncondition,
                                ratio(si), ratio(so)});
        in_all.diff += si.diff;
        in_all.ref += si.ref;
        out_all.diff += so.diff;
        out_all.ref += so.ref;
      }
      trace.points.push_back({s, TraceBranch::kAll, ratio(in_all), ratio(out_all)});
    }
    for (int b = 0; b < 2; ++b) {
      prev_in[b] = mod;
      prev_out[b] = outs[b];
    }
    if (opts.on_branch_output) {
      opts.on_branch_output(s, Branch::kCondition, z, outs[0]);
      opts.on_branch_output(s, Branch::kUncondition, z, outs[1]);
    }
    z = euler_update(z, cfg_combine(outs[0], outs[1], w), 1.0 / steps);
    if (!z.all_finite()) {
      throw NumericError("non-finite latent after step " + std::to_string(s));
    }
  }
  return trace;
}

}  // namespace sf
