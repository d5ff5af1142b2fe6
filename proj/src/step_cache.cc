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

#include "sf/step_cache.h"

#include <algorithm>
#include <string>

#include "sf/error.h"

namespace sf {

std::string_view to_string(BranchMode m) {
  switch (m) {
    case BranchMode::kAll:
      return "all";
    case BranchMode::kConditionOnly:
      return "condition_only";
    case BranchMode::kUnconditionOnly:
      return "uncondition_only";
    case BranchMode::kDisabled:
      return "disabled";
  }
  return "disabled";
}

std::string_view to_string(Branch b) {
  return b == Branch::kCondition ? "condition" : "uncondition";
}

std::string_view to_string(TraceBranch b) {
  switch (b) {
    case TraceBranch::kAll:
      return "all";
    case TraceBranch::kCondition:
      return "condition";
    case TraceBranch::kUncondition:
      return "uncondition";
  }
  return "all";
}

BranchMode parse_branch_mode(std::string_view name) {
  for (BranchMode m : {BranchMode::kAll, BranchMode::kConditionOnly,
                       BranchMode::kUnconditionOnly, BranchMode::kDisabled}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("cache.branch_mode: unknown mode '" + std::string(name) + "'");
}

TraceBranch parse_trace_branch(std::string_view name) {
  for (TraceBranch b :
       {TraceBranch::kAll, TraceBranch::kCondition, TraceBranch::kUncondition}) {
    if (to_string(b) == name) return b;
  }
  throw ConfigError("unknown trace branch '" + std::string(name) + "'");
}

CachePolicy CachePolicy::disabled(int total_steps) {
  return make(BranchMode::kDisabled, 0.0, Polynomial::identity(), total_steps);
}

CachePolicy CachePolicy::make(BranchMode mode, double threshold,
                              Polynomial rescale, int total_steps,
                              const std::set<int>& extra) {
  CachePolicy p;
  p.branch_mode = mode;
  p.threshold = threshold;
  p.rescale = std::move(rescale);
  p.force_compute_steps = extra;
  if (total_steps > 0) {
    p.force_compute_steps.insert(0);
    p.force_compute_steps.insert(total_steps - 1);
  }
  return p;
}

bool CachePolicy::governs(Branch b) const {
  switch (branch_mode) {
    case BranchMode::kAll:
      return true;
    case BranchMode::kConditionOnly:
      return b == Branch::kCondition;
    case BranchMode::kUnconditionOnly:
      return b == Branch::kUncondition;
    case BranchMode::kDisabled:
      return false;
  }
  return false;
}

void CachePolicy::validate(int total_steps) const {
  if (!(threshold >= 0.0)) throw ConfigError("cache.threshold: must be >= 0");
  if (rescale.coefficients.empty()) {
    throw ConfigError("cache.rescale: polynomial is empty");
  }
  for (int s : force_compute_steps) {
    if (s < 0 || s >= total_steps) {
      throw ConfigError("cache.force_compute_steps: step " + std::to_string(s) +
                        " outside [0, " + std::to_string(total_steps) + ")");
    }
  }
  if (total_steps > 0 && (!force_compute_steps.contains(0) ||
                          !force_compute_steps.contains(total_steps - 1))) {
    throw ConfigError(
        "cache.force_compute_steps: must contain the first and last step");
  }
}

CacheDecision should_reuse(CacheState& state, const CachePolicy& policy,
                           double input_distance, int step, Branch branch) {
  BranchCacheState& b = state.at(branch);
  CacheDecision d = CacheDecision::kCompute;
  if (policy.governs(branch) && !policy.force_compute_steps.contains(step) &&
      b.cached_residual.has_value()) {
    b.accumulated_distance += std::max(0.0, policy.rescale(input_distance));
    if (b.accumulated_distance < policy.threshold) {
      d = CacheDecision::kReuse;
    } else {
      b.accumulated_distance = 0.0;
    }
  } else {
    b.accumulated_distance = 0.0;
  }
  if (d == CacheDecision::kReuse) {
    ++b.reused_steps;
  } else {
    ++b.computed_steps;
  }
  return d;
}

std::vector<CacheDecision> replay_decisions(std::span<const double> distances,
                                            const CachePolicy& policy,
                                            Branch branch) {
  CacheState state;
  std::vector<CacheDecision> out;
  out.reserve(distances.size());
  for (std::size_t s = 0; s < distances.size(); ++s) {
    const CacheDecision d =
        should_reuse(state, policy, distances[s], static_cast<int>(s), branch);
    // A compute fills the residual slot; its contents do not matter here.
    if (d == CacheDecision::kCompute) state.at(branch).cached_residual = Tensor({1});
    out.push_back(d);
  }
  return out;
}

Tensor cached_forward(const DiTModel& model, const Tensor& z, double t,
                      const Tensor& cond_tokens, Branch branch, int step,
                      CacheState& state, const CachePolicy& policy,
                      ForwardContext& ctx) {
  const Tensor tokens = model.embed(z);
  const Tensor temb = model.timestep_embedding(t);
  BranchCacheState& bs = state.at(branch);

  if (!policy.governs(branch)) {
    should_reuse(state, policy, 0.0, step, branch);
    return model.head(model.run_blocks(tokens, temb, cond_tokens, ctx), temb);
  }

  Tensor modulated = model.first_block_modulated_input(tokens, temb);
  const double distance = bs.last_modulated_input
                              ? rel_l1(*bs.last_modulated_input, modulated)
                              : 0.0;
  bs.last_modulated_input = std::move(modulated);
  const CacheDecision d = should_reuse(state, policy, distance, step, branch);
  if (d == CacheDecision::kReuse) {
    if (!bs.cached_residual) {
      throw InvariantError("step cache: reuse decided with no cached residual");
    }
    return model.head(add(tokens, *bs.cached_residual), temb);
  }
  Tensor hidden = model.run_blocks(tokens, temb, cond_tokens, ctx);
  bs.cached_residual = sub(hidden, tokens);
  return model.head(hidden, temb);
}

std::vector<TracePoint> CalibrationTrace::for_branch(TraceBranch b) const {
  std::vector<TracePoint> out;
  std::copy_if(points.begin(), points.end(), std::back_inserter(out),
               [b](const TracePoint& p) { return p.branch == b; });
  return out;
}

namespace {

void split_xy(const std::vector<TracePoint>& pts, std::vector<double>& xs,
              std::vector<double>& ys) {
  for (const auto& p : pts) {
    xs.push_back(p.input_distance);
    ys.push_back(p.output_distance);
  }
}

}  // namespace

Polynomial calibrate(const CalibrationTrace& trace, int degree,
                     TraceBranch branch) {
  if (degree < 0) throw CalibrationError("calibration degree must be >= 0");
  const auto pts = trace.for_branch(branch);
  if (pts.size() < static_cast<std::size_t>(degree) + 1) {
    throw CalibrationError(
        "calibration needs at least " + std::to_string(degree + 1) +
        " step pairs on branch '" + std::string(to_string(branch)) + "', got " +
        std::to_string(pts.size()) + "; record a trace with more sampling steps (dit.steps >= " +
        std::to_string(degree + 2) + ")");
  }
  std::vector<double> xs, ys;
  split_xy(pts, xs, ys);
  try {
    return polyfit(xs, ys, static_cast<std::size_t>(degree));
  } catch (const SingularFitError& e) {
    throw CalibrationError(std::string("calibration fit failed: ") + e.what());
  }
}

double calibration_residual(const CalibrationTrace& trace, const Polynomial& p,
                            TraceBranch branch) {
  std::vector<double> xs, ys;
  split_xy(trace.for_branch(branch), xs, ys);
  return poly_residual(p, xs, ys);
}

// Degree-4 condition-branch fit from `sceneforge calibrate` on the default
// configuration and prompt.
Polynomial default_rescale_polynomial() {
  return Polynomial{{1.339511886, -46.12396093, 618.1678644, -3498.703503,
                     7250.10318}};
}

}  // namespace sf
