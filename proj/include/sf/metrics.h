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

#include <json.hpp>

#include "sf/image.h"

namespace sf {

inline constexpr double kPsnrCap = 99.0;

// Peak 1.0; identical images give kPsnrCap. Throws DimensionError on a size
// mismatch.
double psnr(const Image& reference, const Image& candidate);

struct SsimParts {
  double ssim = 0.0;
  // Mean of the contrast-structure factor alone (no luminance term).
  double contrast_structure = 0.0;
};

// 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, valid windows
// only, per channel then averaged. Throws DimensionError when either side is
// below 11 pixels or the sizes differ.
SsimParts ssim_parts(const Image& a, const Image& b);
double ssim(const Image& a, const Image& b);

// Run record. Sections are free-form JSON trees; every wall-clock number
// lives under a key named "timing" so that runs can be compared with
// mask_timing.
struct RunReport {
  static constexpr int kSchemaVersion = 1;

  nlohmann::json config = nlohmann::json::object();
  nlohmann::json generation = nlohmann::json::object();
  nlohmann::json reconstruction = nlohmann::json::object();
  nlohmann::json evaluation = nlohmann::json::object();
  nlohmann::json timing = nlohmann::json::object();

  nlohmann::json to_json() const;
  // Throws IoError on a schema mismatch or missing section.
  static RunReport from_json(const nlohmann::json& j);

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

// Sorted keys, two-space indent, trailing newline.
std::string report_text(const RunReport& report);
void emit_report(const RunReport& report, const std::filesystem::path& path);
RunReport parse_report(const std::filesystem::path& path);

// Copy with every "timing" subtree removed, recursively.
nlohmann::json mask_timing(const nlohmann::json& j);

}  // namespace sf
