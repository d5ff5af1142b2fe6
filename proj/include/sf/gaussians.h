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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sf/image.h"

namespace sf {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major
using Quat = std::array<double, 4>;  // (w, x, y, z)

Mat3 mat_identity();
Mat3 mat_mul(const Mat3& a, const Mat3& b);
Mat3 mat_transpose(const Mat3& a);
Vec3 mat_apply(const Mat3& a, const Vec3& x);
Quat quat_identity();
Quat quat_mul(const Quat& a, const Quat& b);
// Rotation matrix of a unit quaternion.
Mat3 quat_to_matrix(const Quat& q);
// Rotation about the camera/world y axis (yaw), right-handed.
Mat3 rotation_y(double radians);

struct Gaussian3D {
  Vec3 mu{};
  Vec3 scale{1.0, 1.0, 1.0};
  Quat rotation = quat_identity();
  double alpha = 1.0;
  Vec3 color{};

  // R diag(scale^2) R^T
  Mat3 covariance() const;
  // Throws RangeError naming the offending field.
  void validate() const;

  friend bool operator==(const Gaussian3D&, const Gaussian3D&) = default;
};

struct FrameGaussians {
  std::int64_t t = 0;
  std::vector<Gaussian3D> gaussians;

  friend bool operator==(const FrameGaussians&, const FrameGaussians&) =
      default;
};

// Pinhole camera, OpenCV axes (x right, y down, z forward). A world point p
// maps to camera space as R p + trans; pixel (i, j) is sampled at (i, j).
struct Camera {
  double fx = 100.0, fy = 100.0, cx = 50.0, cy = 50.0;
  Mat3 R = mat_identity();
  Vec3 trans{};
  int width = 100, height = 100;
  double near = 0.1, far = 1000.0;

  // Throws ConfigError.
  void validate() const;
  Vec3 to_camera(const Vec3& world) const;
  Vec3 to_world(const Vec3& cam) const;
  Vec3 center() const;  // camera position in world space

  friend bool operator==(const Camera&, const Camera&) = default;
};

inline constexpr double kLowPassDilation = 0.3;
inline constexpr double kCutoffMahalanobis2 = 9.0;  // 3 sigma
inline constexpr double kMinTransmittance = 1e-4;

struct Projected {
  double mean_x = 0.0, mean_y = 0.0;
  double cov_xx = 0.0, cov_xy = 0.0, cov_yy = 0.0;
  double depth = 0.0;
  // Inverse covariance (conic) and the conservative 3 sigma radius.
  double inv_xx = 0.0, inv_xy = 0.0, inv_yy = 0.0;
  double radius = 0.0;
};

// Culled (nullopt) when the camera-space depth is outside (near, far).
std::optional<Projected> project_gaussian(const Gaussian3D& g,
                                          const Camera& cam);

// Footprint exp(-d^T C^-1 d / 2) at pixel (x, y); zero beyond 3 sigma.
double footprint(const Projected& p, double x, double y);

struct RenderOutput {
  Image color;
  std::vector<double> depth;          // [height * width]
  std::vector<double> transmittance;  // [height * width]
  std::vector<double> weight_sum;     // [height * width]
};

struct RasterConfig {
  int tile_size = 16;
};

RenderOutput rasterize(const FrameGaussians& fg, const Camera& cam,
                       const Vec3& background, const RasterConfig& cfg = {});

// Scene file: "FGAUSS01", int64 t, uint64 count, then per gaussian 14
// little-endian float64 values (mu xyz, scale xyz, quaternion wxyz, alpha,
// rgb).
inline constexpr char kSceneMagic[8] = {'F', 'G', 'A', 'U', 'S', 'S', '0', '1'};

std::string serialize_scene(const FrameGaussians& fg);
// Throws IoError on a bad magic, truncation, trailing bytes or invalid
// gaussians.
FrameGaussians deserialize_scene(const std::string& bytes);
void write_scene(const std::filesystem::path& path, const FrameGaussians& fg);
FrameGaussians read_scene(const std::filesystem::path& path);

}  // namespace sf
