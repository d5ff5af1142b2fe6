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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "sf/config.h"
#include "sf/error.h"
#include "sf/metrics.h"
#include "sf/step_cache.h"

// Subcommand bodies shared by the command-line tool and the tests. Every
// command writes only below config.output_dir.
namespace sf {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitRuntime = 2,
  kExitIo = 3,
};

// Failure inside one pipeline stage; keeps the original exit code.
class StageError : public Error {
 public:
  StageError(std::string stage, int code, const std::string& what)
      : Error(what), stage_(std::move(stage)), code_(code) {}
  const std::string& stage() const { return stage_; }
  int code() const { return code_; }

 private:
  std::string stage_;
  int code_;
};

int exit_code_for(const std::exception& e);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  std::optional<std::string> output;
};

// Applies flag overrides and re-validates.
PipelineConfig apply_overrides(PipelineConfig c, const Overrides& o);

namespace paths {
std::filesystem::path frames_dir(const PipelineConfig& c);
std::filesystem::path frame_file(const std::filesystem::path& dir, int t,
                                 int view);
std::filesystem::path scenes_dir(const PipelineConfig& c);
std::filesystem::path scene_file(const std::filesystem::path& dir,
                                 std::int64_t t);
std::filesystem::path report_file(const PipelineConfig& c);
std::filesystem::path policy_file(const PipelineConfig& c);
std::filesystem::path trace_file(const PipelineConfig& c);
std::filesystem::path profile_file(const PipelineConfig& c);
}  // namespace paths

// Samples frames with the configured cache policy and quantization, writes
// frame_{t}_{view}.ppm files and the generation section of report.json.
RunReport cmd_generate(const PipelineConfig& c, std::ostream& log);

// Reads every frame first (a missing or corrupt file aborts before anything
// is written), reconstructs interior timesteps, writes scene files
// atomically and scores held-out frames in evaluation mode.
RunReport cmd_reconstruct(const PipelineConfig& c,
                          const std::filesystem::path& frames_dir,
                          std::ostream& log);

// generate -> reconstruct -> evaluate; with reuse_frames and a complete
// frame set on disk, generation is skipped.
RunReport cmd_pipeline(const PipelineConfig& c, bool reuse_frames,
                       std::ostream& log);

// Records an uncached trace (or loads one), fits the rescale polynomial per
// branch grouping and writes policy.json. Returns the policy document.
nlohmann::json cmd_calibrate(const PipelineConfig& c,
                             const std::optional<std::filesystem::path>& trace,
                             std::ostream& log);

// Block-kind timing table, per-invocation range stats and the recommended
// quantization schemes, written to profile.json.
nlohmann::json cmd_profile(const PipelineConfig& c, std::ostream& log);

// Ray-traced frames of the configured synthetic scene along the trajectory,
// in the same layout cmd_generate uses.
void cmd_render_scene(const PipelineConfig& c,
                      const std::filesystem::path& frames_dir,
                      std::ostream& log);

nlohmann::json trace_to_json(const CalibrationTrace& trace);
CalibrationTrace trace_from_json(const nlohmann::json& j);

}  // namespace sf
