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

#include "sf/metrics.h"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sf/error.h"

namespace sf {
namespace {

void require_same_size(const Image& a, const Image& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw DimensionError(std::string(what) + ": image sizes differ (" +
                         std::to_string(a.width) + "x" +
                         std::to_string(a.height) + " vs " +
                         std::to_string(b.width) + "x" +
                         std::to_string(b.height) + ")");
  }
}

constexpr int kWin = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWin * kWin>& window() {
  static const auto w = [] {
    std::array<double, kWin> g{};
    double s = 0.0;
    for (int i = 0; i < kWin; ++i) {
      const double d = i - kWin / 2;
      g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      s += g[i];
    }
    std::array<double, kWin * kWin> out{};
    for (int i = 0; i < kWin; ++i)
      for (int j = 0; j < kWin; ++j) out[i * kWin + j] = g[i] * g[j] / (s * s);
    return out;
  }();
  return w;
}

}  // namespace

double psnr(const Image& reference, const Image& candidate) {
  require_same_size(reference, candidate, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < reference.rgb.size(); ++i) {
    const double d = reference.rgb[i] - candidate.rgb[i];
    se += d * d;
  }
  if (se == 0.0 || reference.rgb.empty()) return kPsnrCap;
  const double mse = se / static_cast<double>(reference.rgb.size());
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

SsimParts ssim_parts(const Image& a, const Image& b) {
  require_same_size(a, b, "ssim");
  if (a.width < kWin || a.height < kWin) {
    throw DimensionError("ssim: images must be at least 11x11");
  }
  const auto& w = window();
  const int ow = a.width - kWin + 1, oh = a.height - kWin + 1;
  double total = 0.0, total_cs = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < kWin; ++i) {
          for (int j = 0; j < kWin; ++j) {
            const double wt = w[i * kWin + j];
            const double pa = a.at(x + j, y + i, c), pb = b.at(x + j, y + i, c);
            ma += wt * pa;
            mb += wt * pb;
            saa += wt * pa * pa;
            sbb += wt * pb * pb;
            sab += wt * pa * pb;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        const double cs = (2.0 * cov + kC2) / (va + vb + kC2);
        const double lum = (2.0 * ma * mb + kC1) / (ma * ma + mb * mb + kC1);
        total += lum * cs;
        total_cs += cs;
      }
    }
  }
  const double n = 3.0 * ow * oh;
  return {total / n, total_cs / n};
}

double ssim(const Image& a, const Image& b) { return ssim_parts(a, b).ssim; }

nlohmann::json RunReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["config"] = config;
  j["generation"] = generation;
  j["reconstruction"] = reconstruction;
  j["evaluation"] = evaluation;
  j["timing"] = timing;
  return j;
}

RunReport RunReport::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("schema_version") ||
      j["schema_version"] != kSchemaVersion) {
    throw IoError("report: unsupported or missing schema_version");
  }
  RunReport r;
  for (auto [key, slot] :
       {std::pair{"config", &r.config}, std::pair{"generation", &r.generation},
        std::pair{"reconstruction", &r.reconstruction},
        std::pair{"evaluation", &r.evaluation}, std::pair{"timing", &r.timing}}) {
    if (!j.contains(key)) throw IoError(std::string("report: missing ") + key);
    *slot = j[key];
  }
  return r;
}

std::string report_text(const RunReport& report) {
  return report.to_json().dump(2) + "\n";
}

void emit_report(const RunReport& report, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  const std::string s = report_text(report);
  if (!f || !(f << s) || !f.flush()) {
    throw IoError("cannot write report " + path.string());
  }
}

RunReport parse_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open report " + path.string());
  try {
    return RunReport::from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

nlohmann::json mask_timing(const nlohmann::json& j) {
  if (j.is_object()) {
    nlohmann::json out = nlohmann::json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() == "timing") continue;
      out[it.key()] = mask_timing(it.value());
    }
    return out;
  }
  if (j.is_array()) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : j) out.push_back(mask_timing(e));
    return out;
  }
  return j;
}

}  // namespace sf
