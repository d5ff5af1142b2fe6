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

#include "sf/profile.h"

#include <algorithm>
#include <array>
#include <string>

#include "sf/error.h"
#include "sf/sampler.h"

namespace sf {
namespace {

class KindTimer : public ForwardObserver {
 public:
  std::array<double, 5> seconds{};
  void on_block(std::size_t, BlockKind kind, double s) override {
    seconds[static_cast<std::size_t>(kind)] += s;
  }
};

class RangeCollector : public ForwardObserver {
 public:
  std::vector<RangeStats> records;
  void on_attention(std::size_t block, BlockKind kind, const Tensor& q,
                    const Tensor& k, const Tensor& v) override {
    RangeStats r;
    r.kind = kind;
    r.block_index = block;
    r.q = tensor_stats(q.data());
    r.k = tensor_stats(k.data());
    r.v = tensor_stats(v.data());
    records.push_back(r);
  }
};

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

SampleInput default_sample_input(const DiTModel& model,
                                 const Conditioning& cond) {
  return SampleInput{initial_noise(model.config()), 1.0, cond.combined};
}

std::map<BlockKind, KindTiming> profile_block_kinds(const DiTModel& model,
                                                    const SampleInput& input,
                                                    int repetitions) {
  if (repetitions < 3) {
    throw ConfigError("profile.repetitions: must be >= 3, got " +
                      std::to_string(repetitions));
  }
  std::array<std::vector<double>, 5> samples;
  for (int r = 0; r < repetitions; ++r) {
    KindTimer timer;
    ForwardContext ctx;
    ctx.observer = &timer;
    model.forward(input.z, input.t, input.cond_tokens, ctx);
    for (std::size_t i = 0; i < 5; ++i) samples[i].push_back(timer.seconds[i]);
  }
  std::map<BlockKind, KindTiming> out;
  double total = 0.0;
  for (BlockKind kind : kAllBlockKinds) {
    KindTiming kt;
    kt.total_seconds = median(samples[static_cast<std::size_t>(kind)]);
    for (const auto& b : model.weights().blocks) kt.blocks += b.kind == kind;
    total += kt.total_seconds;
    out[kind] = kt;
  }
  for (auto& [kind, kt] : out) {
    kt.share = total > 0.0 ? kt.total_seconds / total : 0.0;
  }
  return out;
}

std::vector<RangeStats> collect_range_stats(const DiTModel& model,
                                            const SampleInput& input) {
  RangeCollector collector;
  ForwardContext ctx;
  ctx.observer = &collector;
  model.forward(input.z, input.t, input.cond_tokens, ctx);
  return std::move(collector.records);
}

}  // namespace sf
