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

#include "sf/recon.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "sf/error.h"
#include "sf/metrics.h"

namespace sf {
namespace {

Vec3 mix(const Vec3& a, const Vec3& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t,
          a[2] + (b[2] - a[2]) * t};
}

double dot3(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

Vec3 ground_color(const Vec3& p) {
  const double v = 0.5 + 0.5 * std::sin(0.9 * p[0]) * std::cos(0.35 * p[2]);
  return mix({0.25, 0.27, 0.30}, {0.55, 0.50, 0.45}, v);
}

Vec3 wall_color(const Vec3& p) {
  const double v =
      0.5 + 0.5 * std::sin(0.6 * p[0] + 0.4 * p[1]) * std::cos(0.5 * p[1]);
  return mix({0.45, 0.55, 0.70}, {0.75, 0.80, 0.85}, v);
}

Vec3 sphere_color(const Sphere& s, const Vec3& p) {
  const double ny = (p[1] - s.center[1]) / s.radius;
  const double polar = std::acos(std::clamp(-ny, -1.0, 1.0));
  return mix(s.color_a, s.color_b, 0.5 + 0.5 * std::sin(s.frequency * polar));
}

}  // namespace

void SceneSpec::validate() const {
  for (std::size_t i = 0; i < spheres.size(); ++i) {
    if (!(spheres[i].radius > 0.0)) {
      throw ConfigError("scene.spheres[" + std::to_string(i) +
                        "].radius: must be > 0");
    }
    for (const Vec3* c : {&spheres[i].color_a, &spheres[i].color_b})
      for (double x : *c)
        if (!(x >= 0.0 && x <= 1.0))
          throw ConfigError("scene.spheres[" + std::to_string(i) +
                            "].color: components must lie in [0, 1]");
  }
  for (double x : background)
    if (!(x >= 0.0 && x <= 1.0))
      throw ConfigError("scene.background: components must lie in [0, 1]");
}

SceneSpec SceneSpec::canonical() {
  SceneSpec s;
  s.spheres = {
      {{-2.0, 0.5, 8.0}, 1.0, {0.80, 0.30, 0.20}, {0.95, 0.70, 0.30}, 3.0},
      {{1.8, 0.3, 10.0}, 1.2, {0.20, 0.50, 0.30}, {0.50, 0.80, 0.40}, 2.0},
      {{0.0, -0.3, 15.0}, 1.8, {0.30, 0.30, 0.70}, {0.60, 0.50, 0.90}, 2.5},
  };
  return s;
}

SceneRender render_scene(const SceneSpec& scene, const Camera& cam) {
  cam.validate();
  SceneRender out;
  out.image = Image(cam.width, cam.height);
  out.depth.width = cam.width;
  out.depth.height = cam.height;
  out.depth.values.assign(static_cast<std::size_t>(cam.width) * cam.height,
                          cam.far);
  const Vec3 o = cam.center();
  const Mat3 rt = mat_transpose(cam.R);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      // Camera-space direction with unit z, so the ray parameter is depth.
      const Vec3 d = mat_apply(rt, {(x - cam.cx) / cam.fx,
                                    (y - cam.cy) / cam.fy, 1.0});
      double best = cam.far;
      Vec3 color = scene.background;
      auto consider = [&](double s, auto&& shade) {
        if (s > cam.near && s < best) {
          best = s;
          color = shade(Vec3{o[0] + s * d[0], o[1] + s * d[1], o[2] + s * d[2]});
        }
      };
      if (scene.ground_y && d[1] != 0.0)
        consider((*scene.ground_y - o[1]) / d[1], ground_color);
      if (scene.wall_z && d[2] != 0.0)
        consider((*scene.wall_z - o[2]) / d[2], wall_color);
      for (const Sphere& sp : scene.spheres) {
        const Vec3 oc{o[0] - sp.center[0], o[1] - sp.center[1],
                      o[2] - sp.center[2]};
        const double a = dot3(d, d), b = 2.0 * dot3(d, oc),
                     c = dot3(oc, oc) - sp.radius * sp.radius;
        const double disc = b * b - 4.0 * a * c;
        if (disc < 0.0) continue;
        const double r = std::sqrt(disc);
        const double s1 = (-b - r) / (2.0 * a), s2 = (-b + r) / (2.0 * a);
        auto shade = [&](const Vec3& p) { return sphere_color(sp, p); };
        consider(s1 > cam.near ? s1 : s2, shade);
      }
      out.depth.values[static_cast<std::size_t>(y) * cam.width + x] = best;
      for (int k = 0; k < 3; ++k) out.image.at(x, y, k) = color[k];
    }
  }
  return out;
}

DepthMap depth_stub(const SceneSpec& scene, const Camera& cam) {
  return render_scene(scene, cam).depth;
}

std::string_view to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::kStatic:
      return "static";
    case TrajectoryKind::kLinear:
      return "linear";
    case TrajectoryKind::kCircular:
      return "circular";
  }
  return "static";
}

TrajectoryKind parse_trajectory_kind(std::string_view name) {
  for (auto k : {TrajectoryKind::kStatic, TrajectoryKind::kLinear,
                 TrajectoryKind::kCircular})
    if (to_string(k) == name) return k;
  throw ConfigError("trajectory.kind: unknown value '" + std::string(name) +
                    "' (static, linear, circular)");
}

void Trajectory::validate() const {
  if (frames < 1) throw ConfigError("trajectory.frames: must be >= 1");
  if (views < 1) throw ConfigError("trajectory.views: must be >= 1");
  if (width < 1 || height < 1)
    throw ConfigError("trajectory.width/height: must be >= 1");
  if (!(fx > 0.0 && fy > 0.0))
    throw ConfigError("trajectory.fx/fy: must be > 0");
  if (!(near > 0.0 && near < far))
    throw ConfigError("trajectory.near/far: need 0 < near < far");
}

Camera estimate_pose_stub(int frame, int view, const Trajectory& traj) {
  if (frame < 0 || frame >= traj.frames || view < 0 || view >= traj.views) {
    throw RangeError("trajectory has no pose for frame " +
                     std::to_string(frame) + ", view " + std::to_string(view));
  }
  Vec3 center = traj.origin;
  double yaw = 0.0;
  switch (traj.kind) {
    case TrajectoryKind::kStatic:
      break;
    case TrajectoryKind::kLinear:
      for (int i = 0; i < 3; ++i) center[i] += frame * traj.velocity[i];
      break;
    case TrajectoryKind::kCircular: {
      const double ox = traj.origin[0] - traj.orbit_center[0];
      const double oz = traj.origin[2] - traj.orbit_center[2];
      const double r = std::hypot(ox, oz);
      const double theta = std::atan2(ox, -oz) + frame * traj.angular_speed;
      center = {traj.orbit_center[0] + r * std::sin(theta), traj.origin[1],
                traj.orbit_center[2] - r * std::cos(theta)};
      yaw = -theta;  // keep facing the orbit center
      break;
    }
  }
  yaw += (view - 0.5 * (traj.views - 1)) * traj.view_yaw_spacing;

  Camera cam;
  cam.fx = traj.fx;
  cam.fy = traj.fy;
  cam.cx = 0.5 * (traj.width - 1);
  cam.cy = 0.5 * (traj.height - 1);
  cam.width = traj.width;
  cam.height = traj.height;
  cam.near = traj.near;
  cam.far = traj.far;
  cam.R = mat_transpose(rotation_y(yaw));
  const Vec3 rc = mat_apply(cam.R, center);
  cam.trans = {-rc[0], -rc[1], -rc[2]};
  return cam;
}

void ReconConfig::validate() const {
  if (delta < 1) throw ConfigError("recon.delta: must be >= 1");
  if (per_pixel_stride < 1)
    throw ConfigError("recon.per_pixel_stride: must be >= 1");
  if (!(base_alpha > 0.0 && base_alpha <= 1.0))
    throw ConfigError("recon.base_alpha: must lie in (0, 1]");
  if (!(scale_factor > 0.0))
    throw ConfigError("recon.scale_factor: must be > 0");
  if (!(neighbor_weight >= 0.0 && neighbor_weight < 1.0))
    throw ConfigError("recon.neighbor_weight: must lie in [0, 1)");
}

std::vector<Gaussian3D> lift_to_gaussians(const Image& image,
                                          const DepthMap& depth,
                                          const Camera& cam,
                                          const ReconConfig& cfg,
                                          double alpha_scale) {
  if (image.width != depth.width || image.height != depth.height) {
    throw DimensionError("lift: image " + std::to_string(image.width) + "x" +
                         std::to_string(image.height) + " vs depth " +
                         std::to_string(depth.width) + "x" +
                         std::to_string(depth.height));
  }
  if (image.width != cam.width || image.height != cam.height) {
    throw DimensionError("lift: image size differs from the camera's");
  }
  const int s = cfg.per_pixel_stride;
  std::vector<Gaussian3D> out;
  out.reserve(static_cast<std::size_t>((image.height + s - 1) / s) *
              ((image.width + s - 1) / s));
  for (int y = 0; y < image.height; y += s) {
    for (int x = 0; x < image.width; x += s) {
      const double d = depth.at(x, y);
      Gaussian3D g;
      g.mu = cam.to_world({(x - cam.cx) / cam.fx * d,
                           (y - cam.cy) / cam.fy * d, d});
      const double sc = cfg.scale_factor * d / cam.fx;
      g.scale = {sc, sc, sc};
      g.alpha = cfg.base_alpha * alpha_scale;
      for (int k = 0; k < 3; ++k)
        g.color[k] = std::clamp(image.at(x, y, k), 0.0, 1.0);
      out.push_back(g);
    }
  }
  return out;
}

VectorFrameSource::VectorFrameSource(std::vector<std::vector<Image>> frames)
    : frames_(std::move(frames)) {
  for (const auto& row : frames_) {
    if (row.size() != frames_.front().size()) {
      throw DimensionError("frame source: every timestep needs every view");
    }
  }
}

int VectorFrameSource::frames() const {
  return static_cast<int>(frames_.size());
}

int VectorFrameSource::views() const {
  return frames_.empty() ? 0 : static_cast<int>(frames_.front().size());
}

const Image& VectorFrameSource::frame(int t, int view) const {
  if (t < 0 || t >= frames() || view < 0 || view >= views()) {
    throw RangeError("no frame for t=" + std::to_string(t) +
                     ", view=" + std::to_string(view));
  }
  return frames_[t][view];
}

const Image& RecordingFrameSource::frame(int t, int view) const {
  accessed_.insert({t, view});
  return inner_.frame(t, view);
}

bool RecordingFrameSource::touched_timestep(int t) const {
  return std::any_of(accessed_.begin(), accessed_.end(),
                     [t](const auto& p) { return p.first == t; });
}

FrameGaussians reconstruct_frame(const FrameSource& frames, int t,
                                 const ReconConfig& cfg,
                                 const Trajectory& traj,
                                 const SceneSpec& scene, ReconMode mode) {
  cfg.validate();
  if (t - cfg.delta < 0 || t + cfg.delta >= frames.frames()) {
    throw BoundaryError("timestep " + std::to_string(t) + " needs frames " +
                        std::to_string(t - cfg.delta) + " and " +
                        std::to_string(t + cfg.delta) + ", source has 0.." +
                        std::to_string(frames.frames() - 1));
  }
  FrameGaussians fg;
  fg.t = t;
  auto add = [&](int ts, double alpha_scale) {
    for (int v = 0; v < frames.views(); ++v) {
      const Camera cam = estimate_pose_stub(ts, v, traj);
      const Image& img = frames.frame(ts, v);
      auto g = lift_to_gaussians(img, depth_stub(scene, cam), cam, cfg,
                                 alpha_scale);
      fg.gaussians.insert(fg.gaussians.end(), g.begin(), g.end());
    }
  };
  if (mode == ReconMode::kFull) {
    add(t, 1.0);
    if (cfg.neighbor_weight > 0.0) {
      add(t - cfg.delta, cfg.neighbor_weight);
      add(t + cfg.delta, cfg.neighbor_weight);
    }
  } else {
    add(t - cfg.delta, 1.0);
    add(t + cfg.delta, 1.0);
  }
  return fg;
}

std::vector<FrameGaussians> reconstruct_sequence(const FrameSource& frames,
                                                 const ReconConfig& cfg,
                                                 const Trajectory& traj,
                                                 const SceneSpec& scene,
                                                 ReconMode mode) {
  cfg.validate();
  if (frames.frames() < 2 * cfg.delta + 1) {
    throw ConfigError("recon.delta: " + std::to_string(frames.frames()) +
                      " frames are too few for delta " +
                      std::to_string(cfg.delta) + " (need 2 * delta + 1)");
  }
  std::vector<FrameGaussians> out;
  for (int t = cfg.delta; t < frames.frames() - cfg.delta; ++t) {
    out.push_back(reconstruct_frame(frames, t, cfg, traj, scene, mode));
  }
  return out;
}

std::vector<ViewScore> novel_view_eval(const std::vector<FrameGaussians>& recon,
                                       int t,
                                       const std::vector<Image>& held_out,
                                       const std::vector<Camera>& cameras,
                                       const Vec3& background,
                                       const RasterConfig& raster) {
  auto it = std::find_if(recon.begin(), recon.end(),
                         [t](const FrameGaussians& f) { return f.t == t; });
  if (it == recon.end()) {
    throw RangeError("no reconstruction for timestep " + std::to_string(t));
  }
  if (held_out.size() != cameras.size()) {
    throw DimensionError("novel view eval: images and cameras differ in count");
  }
  std::vector<ViewScore> scores;
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    const RenderOutput r = rasterize(*it, cameras[v], background, raster);
    scores.push_back({static_cast<int>(v), psnr(held_out[v], r.color),
                      ssim(held_out[v], r.color)});
  }
  return scores;
}

}  // namespace sf
