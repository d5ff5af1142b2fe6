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
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "sf/dit.h"
#include "sf/numerics.h"

namespace sf {

enum class BranchMode { kAll, kConditionOnly, kUnconditionOnly, kDisabled };
enum class Branch { kCondition = 0, kUncondition = 1 };
// Trace grouping: the two CFG branches, or both taken together.
enum class TraceBranch { kAll, kCondition, kUncondition };

std::string_view to_string(BranchMode m);
std::string_view to_string(Branch b);
std::string_view to_string(TraceBranch b);
BranchMode parse_branch_mode(std::string_view name);
TraceBranch parse_trace_branch(std::string_view name);

inline constexpr int kDefaultCacheDegree = 4;

// Default rescale and threshold for the default toy model configuration,
// fitted on the condition branch of a recorded trace (`calibrate` command).
Polynomial default_rescale_polynomial();
inline constexpr double kDefaultCacheThreshold = 0.45;

struct CachePolicy {
  BranchMode branch_mode = BranchMode::kConditionOnly;
  double threshold = kDefaultCacheThreshold;
  Polynomial rescale = default_rescale_polynomial();
  std::set<int> force_compute_steps;  // always holds 0 and steps - 1

  static CachePolicy disabled(int total_steps);
  // Fills force_compute_steps with {0, total_steps - 1} plus `extra`.
  static CachePolicy make(BranchMode mode, double threshold, Polynomial rescale,
                          int total_steps, const std::set<int>& extra = {});

  bool governs(Branch b) const;
  // Throws ConfigError (key-qualified) on a violated invariant.
  void validate(int total_steps) const;
};

struct BranchCacheState {
  double accumulated_distance = 0.0;
  std::optional<Tensor> cached_residual;
  std::optional<Tensor> last_modulated_input;
  int computed_steps = 0;
  int reused_steps = 0;
};

struct CacheState {
  std::array<BranchCacheState, 2> branches;

  BranchCacheState& at(Branch b) { return branches[static_cast<int>(b)]; }
  const BranchCacheState& at(Branch b) const {
    return branches[static_cast<int>(b)];
  }
};

enum class CacheDecision { kReuse, kCompute };

// Decides one step of one branch and updates the accumulator and counters.
// Ungoverned branches, forced steps and an empty residual slot compute.
// Otherwise max(0, rescale(input_distance)) is accumulated; below threshold
// reuses, else computes and resets the accumulator.
CacheDecision should_reuse(CacheState& state, const CachePolicy& policy,
                           double input_distance, int step, Branch branch);

// Replays decisions for one branch over a fixed sequence of input distances
// (distances[0] is ignored: step 0 has no predecessor).
std::vector<CacheDecision> replay_decisions(std::span<const double> distances,
                                            const CachePolicy& policy,
                                            Branch branch = Branch::kCondition);

// One branch evaluation through the cache. On compute the blocks run and
// (output - input) of the block stack is stored; on reuse the stored residual
// is added to the embedded input and only the head runs. Ungoverned branches
// skip the input-distance computation entirely.
Tensor cached_forward(const DiTModel& model, const Tensor& z, double t,
                      const Tensor& cond_tokens, Branch branch, int step,
                      CacheState& state, const CachePolicy& policy,
                      ForwardContext& ctx);

struct TracePoint {
  int step = 0;  // the later step of the consecutive pair
  TraceBranch branch = TraceBranch::kCondition;
  double input_distance = 0.0;
  double output_distance = 0.0;
};

struct CalibrationTrace {
  std::vector<TracePoint> points;

  std::vector<TracePoint> for_branch(TraceBranch b) const;
};

// Least-squares fit of output_distance against input_distance on one branch.
// Throws CalibrationError with fewer than degree + 1 pairs.
Polynomial calibrate(const CalibrationTrace& trace, int degree,
                     TraceBranch branch);

// Sum of squared fit residuals of `p` on one branch of the trace.
double calibration_residual(const CalibrationTrace& trace, const Polynomial& p,
                            TraceBranch branch);

}  // namespace sf
