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

#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "sf/gaussians.h"
#include "sf/image.h"

namespace sf {

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // camera-space z, row-major

  double at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

// Textured sphere: colors blend between a and b along a smooth band pattern.
struct Sphere {
  Vec3 center{0.0, 0.0, 10.0};
  double radius = 1.0;
  Vec3 color_a{0.8, 0.3, 0.2};
  Vec3 color_b{0.9, 0.7, 0.3};
  double frequency = 2.0;  // bands per radian of polar angle
};

// Analytic synthetic world in OpenCV axes (y down): an optional ground plane
// y = ground_y, an optional back wall z = wall_z, and spheres. Surfaces carry
// smooth procedural textures.
struct SceneSpec {
  std::optional<double> ground_y = 1.5;
  std::optional<double> wall_z = 22.0;
  std::vector<Sphere> spheres;
  Vec3 background{0.6, 0.75, 0.9};

  // Throws ConfigError naming the offending key.
  void validate() const;
  // Ground, wall and three spheres in front of the origin.
  static SceneSpec canonical();
};

struct SceneRender {
  Image image;
  DepthMap depth;
};

// Nearest-surface ray cast through every pixel center. Rays that miss, or
// hit beyond the far plane, get the background color and depth = far.
SceneRender render_scene(const SceneSpec& scene, const Camera& cam);
DepthMap depth_stub(const SceneSpec& scene, const Camera& cam);

enum class TrajectoryKind { kStatic, kLinear, kCircular };
std::string_view to_string(TrajectoryKind k);
TrajectoryKind parse_trajectory_kind(std::string_view name);

// Scripted multi-view rig. Every view shares intrinsics and the rig center;
// view v is yawed by (v - (views - 1) / 2) * view_yaw_spacing.
struct Trajectory {
  TrajectoryKind kind = TrajectoryKind::kStatic;
  int frames = 8;
  int views = 2;
  int width = 128, height = 64;
  double fx = 64.0, fy = 64.0;
  double near = 0.1, far = 100.0;
  double view_yaw_spacing = 0.5;
  Vec3 origin{0.0, 0.0, 0.0};    // rig center at frame 0
  Vec3 velocity{0.0, 0.0, 0.5};  // linear: meters per frame, world axes
  Vec3 orbit_center{0.0, 0.0, 12.0};
  double angular_speed = 0.05;  // circular: radians per frame

  void validate() const;
};

// Throws RangeError for an index outside the trajectory.
Camera estimate_pose_stub(int frame, int view, const Trajectory& traj);

struct ReconConfig {
  int delta = 1;
  int per_pixel_stride = 1;
  double base_alpha = 1.0;
  double scale_factor = 0.1;
  double neighbor_weight = 0.5;

  void validate() const;
};

// One gaussian per sampled pixel, ceil(h / stride) * ceil(w / stride) in
// total; pixel colors are clamped into [0, 1]. alpha_scale multiplies
// base_alpha. Throws DimensionError on a resolution mismatch.
std::vector<Gaussian3D> lift_to_gaussians(const Image& image,
                                          const DepthMap& depth,
                                          const Camera& cam,
                                          const ReconConfig& cfg,
                                          double alpha_scale = 1.0);

// Generated frames indexed by (timestep, view).
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual int frames() const = 0;
  virtual int views() const = 0;
  virtual const Image& frame(int t, int view) const = 0;
};

class VectorFrameSource : public FrameSource {
 public:
  // frames[t][view]
  explicit VectorFrameSource(std::vector<std::vector<Image>> frames);
  int frames() const override;
  int views() const override;
  const Image& frame(int t, int view) const override;

 private:
  std::vector<std::vector<Image>> frames_;
};

// Records every (t, view) read, for access audits.
class RecordingFrameSource : public FrameSource {
 public:
  explicit RecordingFrameSource(const FrameSource& inner) : inner_(inner) {}
  int frames() const override { return inner_.frames(); }
  int views() const override { return inner_.views(); }
  const Image& frame(int t, int view) const override;
  const std::set<std::pair<int, int>>& accessed() const { return accessed_; }
  bool touched_timestep(int t) const;

 private:
  const FrameSource& inner_;
  mutable std::set<std::pair<int, int>> accessed_;
};

enum class ReconMode {
  kFull,        // t at base alpha plus t +- delta attenuated by neighbor_weight
  kEvaluation,  // t +- delta only, at base alpha; frame t is never read
};

// Gaussians for timestep t, tagged t. Depth comes from the scene stub.
// Throws BoundaryError when t - delta or t + delta is outside the source.
FrameGaussians reconstruct_frame(const FrameSource& frames, int t,
                                 const ReconConfig& cfg,
                                 const Trajectory& traj,
                                 const SceneSpec& scene,
                                 ReconMode mode = ReconMode::kFull);

// Interior timesteps delta .. frames - delta - 1, in order. Throws
// ConfigError when frames < 2 delta + 1.
std::vector<FrameGaussians> reconstruct_sequence(
    const FrameSource& frames, const ReconConfig& cfg, const Trajectory& traj,
    const SceneSpec& scene, ReconMode mode = ReconMode::kFull);

struct ViewScore {
  int view = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

// Renders recon's entry for timestep t from each held-out camera and scores
// it against the held-out image. Throws RangeError when t is absent.
std::vector<ViewScore> novel_view_eval(const std::vector<FrameGaussians>& recon,
                                       int t,
                                       const std::vector<Image>& held_out,
                                       const std::vector<Camera>& cameras,
                                       const Vec3& background,
                                       const RasterConfig& raster = {});

}  // namespace sf
