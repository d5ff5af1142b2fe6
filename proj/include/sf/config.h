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

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sf/dit.h"
#include "sf/gaussians.h"
#include "sf/quant_attention.h"
#include "sf/recon.h"
#include "sf/step_cache.h"

namespace sf {

inline constexpr int kConfigSchemaVersion = 1;

struct CacheConfig {
  BranchMode branch_mode = BranchMode::kConditionOnly;
  double threshold = kDefaultCacheThreshold;
  int degree = kDefaultCacheDegree;
  // Empty means the built-in calibrated default.
  std::optional<Polynomial> rescale;
  std::set<int> force_compute_steps;  // in addition to the first and last

  CachePolicy policy(int steps) const;
};

struct ProfileConfig {
  int repetitions = 3;
};

struct CalibrateConfig {
  // Replace the model's head with a constant (zero weight, unit bias).
  bool constant_stub = false;
};

struct PipelineConfig {
  std::string prompt = "a rainy city street";
  std::vector<BevBox> boxes = {{0.0, 0.0, 2.0, 4.0, 0.3, 1}};
  BevGrid grid;
  DiTConfig dit;
  CacheConfig cache;
  // Kinds listed here run quantized attention; others run the reference.
  std::map<BlockKind, QuantScheme> quant;
  ReconConfig recon;
  RasterConfig raster;
  SceneSpec scene = SceneSpec::canonical();
  // frames, views, width and height always follow `dit`.
  Trajectory trajectory;
  std::string output_dir = "out";
  ProfileConfig profile;
  CalibrateConfig calibrate;

  // Copies the DiT geometry into the trajectory.
  void sync();
  // Every nested invariant; ConfigError messages start with the key path.
  void validate() const;
};

// Strict: unknown keys and wrong types raise ConfigError naming the key.
PipelineConfig config_from_json(const nlohmann::json& j);
// Fully resolved; config_from_json(config_to_json(c)) reproduces c.
nlohmann::json config_to_json(const PipelineConfig& c);
// Throws IoError when unreadable, ConfigError when invalid.
PipelineConfig load_config(const std::filesystem::path& path);

nlohmann::json scheme_to_json(const QuantScheme& s);

}  // namespace sf
