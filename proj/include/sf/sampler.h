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
#include <functional>
#include <map>
#include <vector>

#include "sf/dit.h"
#include "sf/image.h"
#include "sf/step_cache.h"

namespace sf {

// Rectified-flow time at a step: t = 1 - step / steps, dt = 1 / steps.
double schedule_time(int step, int steps);

// Initial latent z_0 for a configuration (seeded from config.seed).
Tensor initial_noise(const DiTConfig& config);

// w * cond + (1 - w) * uncond. Algebraically uncond + w (cond - uncond); this
// form makes w = 0 and w = 1 exact.
Tensor cfg_combine(const Tensor& cond_out, const Tensor& uncond_out, double w);

// z + velocity * dt
Tensor euler_update(const Tensor& z, const Tensor& velocity, double dt);

struct BranchCounters {
  int computed_steps = 0;
  int reused_steps = 0;
};

struct SampleReport {
  int steps = 0;
  std::array<BranchCounters, 2> branches{};  // indexed by Branch
  std::map<BlockKind, double> block_seconds;
  double total_seconds = 0.0;
};

struct SampleOptions {
  const std::map<BlockKind, QuantScheme>* schemes = nullptr;
  ForwardObserver* observer = nullptr;
  // Called after each branch evaluation with the branch input latent and the
  // branch output.
  std::function<void(int step, Branch branch, const Tensor& z,
                     const Tensor& out)>
      on_branch_output;
};

struct SampleResult {
  Tensor latent;
  std::vector<Image> frames;
  SampleReport report;
};

// One CFG + Euler step; both branch evaluations go through cached_forward.
Tensor denoise_step(const DiTModel& model, const Tensor& z, int step,
                    const Conditioning& cond, const Conditioning& uncond,
                    const CachePolicy& policy, CacheState& state,
                    ForwardContext& ctx, const SampleOptions& opts = {});

SampleResult sample(const DiTModel& model, const Conditioning& cond,
                    const CachePolicy& policy, const SampleOptions& opts = {});

// Uncached sampling run that records consecutive-step input distances (at
// the first block's modulated input) and output distances (of the raw branch
// outputs) for the condition and uncondition branches and for both taken
// together. The trajectory is the one `sample` follows with caching disabled.
CalibrationTrace record_trace(const DiTModel& model, const Conditioning& cond,
                              const SampleOptions& opts = {});

}  // namespace sf
