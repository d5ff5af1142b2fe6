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

#include <map>
#include <vector>

#include "sf/attention.h"
#include "sf/dit.h"

namespace sf {

// One model evaluation's inputs.
struct SampleInput {
  Tensor z;
  double t = 1.0;
  Tensor cond_tokens;
};

// Initial noise at t = 1 with the model's own conditioning for `prompt`.
SampleInput default_sample_input(const DiTModel& model,
                                 const Conditioning& cond);

struct KindTiming {
  double total_seconds = 0.0;  // median over repetitions
  double share = 0.0;
  std::size_t blocks = 0;      // blocks of this kind per forward pass
};

// Wall time per block kind over `repetitions` forward passes (median per
// kind). Every kind is present; kinds without blocks get zero time.
std::map<BlockKind, KindTiming> profile_block_kinds(const DiTModel& model,
                                                    const SampleInput& input,
                                                    int repetitions);

// One record per attention block invocation of a single forward pass, on the
// projected Q, K, V before any quantization.
std::vector<RangeStats> collect_range_stats(const DiTModel& model,
                                            const SampleInput& input);

}  // namespace sf
