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

#include <doctest.h>

#include <cmath>

#include "sf/error.h"
#include "sf/metrics.h"
#include "sf/recon.h"
#include "test_util.h"

using namespace sf;

namespace {

Trajectory small_trajectory(TrajectoryKind kind, int frames = 5) {
  Trajectory t;
  t.kind = kind;
  t.frames = frames;
  t.views = 2;
  t.width = 48;
  t.height = 24;
  t.fx = t.fy = 24.0;
  return t;
}

VectorFrameSource render_frames(const SceneSpec& scene, const Trajectory& traj) {
  std::vector<std::vector<Image>> frames(traj.frames);
  for (int t = 0; t < traj.frames; ++t)
    for (int v = 0; v < traj.views; ++v)
      frames[t].push_back(render_scene(scene, estimate_pose_stub(t, v, traj)).image);
  return VectorFrameSource(std::move(frames));
}

Vec3 forward_axis(const Camera& c) { return mat_apply(mat_transpose(c.R), {0, 0, 1}); }

void check_orthonormal(const Mat3& r) {
  const Mat3 p = mat_mul(mat_transpose(r), r);
  const Mat3 eye = mat_identity();
  for (int k = 0; k < 9; ++k) CHECK(std::abs(p[k] - eye[k]) <= 1e-9);
}

}  // namespace

TEST_CASE("pose stub playback") {
  const Trajectory st = small_trajectory(TrajectoryKind::kStatic);
  for (int v = 0; v < 2; ++v)
    for (int t = 1; t < st.frames; ++t)
      CHECK(estimate_pose_stub(t, v, st) == estimate_pose_stub(0, v, st));
  CHECK(!(estimate_pose_stub(0, 0, st) == estimate_pose_stub(0, 1, st)));

  Trajectory lin = small_trajectory(TrajectoryKind::kLinear);
  lin.velocity = {0.25, 0.0, 0.5};
  for (int v = 0; v < 2; ++v)
    for (int t = 1; t < lin.frames; ++t) {
      const Vec3 a = estimate_pose_stub(t - 1, v, lin).center();
      const Vec3 b = estimate_pose_stub(t, v, lin).center();
      for (int k = 0; k < 3; ++k) CHECK(std::abs(b[k] - a[k] - lin.velocity[k]) <= 1e-12);
    }
  lin.views = 1;
  for (int t = 1; t < lin.frames; ++t) {
    const Vec3 a = estimate_pose_stub(t - 1, 0, lin).trans;
    const Vec3 b = estimate_pose_stub(t, 0, lin).trans;
    for (int k = 0; k < 3; ++k) CHECK(b[k] - a[k] == doctest::Approx(-lin.velocity[k]));
  }

  Trajectory circ = small_trajectory(TrajectoryKind::kCircular, 40);
  circ.angular_speed = 0.2;
  circ.views = 1;
  for (int t = 0; t < circ.frames; ++t) {
    const Camera c = estimate_pose_stub(t, 0, circ);
    check_orthonormal(c.R);
    // The single view keeps looking at the orbit center.
    const Vec3 f = forward_axis(c), o = c.center();
    const double dx = circ.orbit_center[0] - o[0], dz = circ.orbit_center[2] - o[2];
    const double n = std::hypot(dx, dz);
    CHECK(f[0] == doctest::Approx(dx / n));
    CHECK(f[2] == doctest::Approx(dz / n));
  }

  CHECK_THROWS_AS(estimate_pose_stub(5, 0, st), RangeError);
  CHECK_THROWS_AS(estimate_pose_stub(0, 2, st), RangeError);
  CHECK_THROWS_AS(estimate_pose_stub(-1, 0, st), RangeError);
  CHECK(parse_trajectory_kind(to_string(TrajectoryKind::kCircular)) == TrajectoryKind::kCircular);
  CHECK_THROWS_AS(parse_trajectory_kind("spiral"), ConfigError);
}

TEST_CASE("depth stub") {
  Camera cam;
  cam.width = 21;
  cam.height = 11;
  cam.fx = cam.fy = 20;
  cam.cx = 10;
  cam.cy = 5;

  SceneSpec wall;
  wall.ground_y.reset();
  wall.wall_z = 7.5;
  for (double d : depth_stub(wall, cam).values) CHECK(d == doctest::Approx(7.5).epsilon(1e-12));

  SceneSpec ball;
  ball.ground_y.reset();
  ball.wall_z.reset();
  ball.spheres = {Sphere{{0, 0, 9}, 2.0}};
  const DepthMap dm = depth_stub(ball, cam);
  CHECK(dm.at(10, 5) == doctest::Approx(7.0).epsilon(1e-12));
  CHECK(dm.at(0, 0) == cam.far);

  SceneSpec empty;
  empty.ground_y.reset();
  empty.wall_z.reset();
  for (double d : depth_stub(empty, cam).values) CHECK(d == cam.far);
  const SceneRender r = render_scene(empty, cam);
  for (int k = 0; k < 3; ++k) CHECK(r.image.at(3, 3, k) == empty.background[k]);
}

TEST_CASE("lifting") {
  Camera cam;
  cam.width = cam.height = 1;
  cam.cx = cam.cy = 0.0;
  Image img(1, 1, 1.0);
  DepthMap d{1, 1, {2.0}};
  ReconConfig cfg;
  const auto g = lift_to_gaussians(img, d, cam, cfg);
  REQUIRE(g.size() == 1);
  CHECK(g[0].mu == Vec3{0, 0, 2});
  CHECK(g[0].color == Vec3{1, 1, 1});
  CHECK(g[0].alpha == cfg.base_alpha);
  CHECK(g[0].rotation == quat_identity());
  CHECK(g[0].scale[0] == doctest::Approx(cfg.scale_factor * 2.0 / cam.fx));

  Camera wide;
  wide.width = 10;
  wide.height = 7;
  Image im(10, 7, 0.5);
  DepthMap dd{10, 7, std::vector<double>(70, 3.0)};
  ReconConfig c2;
  for (int stride : {1, 2, 3, 7, 10}) {
    c2.per_pixel_stride = stride;
    CHECK(lift_to_gaussians(im, dd, wide, c2).size() ==
          static_cast<std::size_t>(((7 + stride - 1) / stride) * ((10 + stride - 1) / stride)));
  }
  // Out-of-range pixel values are clamped into valid colors.
  im.at(0, 0, 0) = 1.7;
  c2.per_pixel_stride = 1;
  CHECK(lift_to_gaussians(im, dd, wide, c2)[0].color[0] == 1.0);

  DepthMap wrong{9, 7, std::vector<double>(63, 3.0)};
  CHECK_THROWS_AS(lift_to_gaussians(im, wrong, wide, c2), DimensionError);
}

TEST_CASE("reconstruct_frame") {
  const SceneSpec scene = SceneSpec::canonical();
  const Trajectory traj = small_trajectory(TrajectoryKind::kStatic);
  const VectorFrameSource frames = render_frames(scene, traj);
  ReconConfig cfg;
  cfg.per_pixel_stride = 2;

  const FrameGaussians fg = reconstruct_frame(frames, 2, cfg, traj, scene);
  CHECK(fg.t == 2);
  const std::size_t per = fg.gaussians.size() / 3;
  REQUIRE(per * 3 == fg.gaussians.size());
  for (std::size_t i = 0; i < per; ++i) {
    for (int k = 0; k < 3; ++k) {
      CHECK(std::abs(fg.gaussians[i].mu[k] - fg.gaussians[per + i].mu[k]) <= 1e-12);
      CHECK(std::abs(fg.gaussians[i].mu[k] - fg.gaussians[2 * per + i].mu[k]) <= 1e-12);
    }
    CHECK(fg.gaussians[i].alpha == cfg.base_alpha);
    CHECK(fg.gaussians[per + i].alpha == cfg.base_alpha * cfg.neighbor_weight);
  }

  CHECK_THROWS_AS(reconstruct_frame(frames, 0, cfg, traj, scene), BoundaryError);
  CHECK_THROWS_AS(reconstruct_frame(frames, 4, cfg, traj, scene), BoundaryError);

  cfg.neighbor_weight = 0.0;
  const FrameGaussians solo = reconstruct_frame(frames, 2, cfg, traj, scene);
  std::vector<Gaussian3D> expect;
  for (int v = 0; v < traj.views; ++v) {
    const Camera cam = estimate_pose_stub(2, v, traj);
    const auto g = lift_to_gaussians(frames.frame(2, v), depth_stub(scene, cam), cam, cfg);
    expect.insert(expect.end(), g.begin(), g.end());
  }
  CHECK(solo.gaussians == expect);
}

TEST_CASE("evaluation mode never reads the held-out timestep") {
  const SceneSpec scene = SceneSpec::canonical();
  const Trajectory traj = small_trajectory(TrajectoryKind::kLinear);
  const VectorFrameSource frames = render_frames(scene, traj);
  ReconConfig cfg;
  cfg.per_pixel_stride = 3;
  for (int t = 1; t < 4; ++t) {
    const RecordingFrameSource audit(frames);
    reconstruct_frame(audit, t, cfg, traj, scene, ReconMode::kEvaluation);
    CHECK(!audit.touched_timestep(t));
    CHECK(audit.touched_timestep(t - 1));
    CHECK(audit.touched_timestep(t + 1));
    CHECK(audit.accessed().size() == 4);

    const RecordingFrameSource full(frames);
    reconstruct_frame(full, t, cfg, traj, scene, ReconMode::kFull);
    CHECK(full.touched_timestep(t));
  }
}

TEST_CASE("sequence counts and determinism") {
  const SceneSpec scene = SceneSpec::canonical();
  ReconConfig cfg;
  cfg.per_pixel_stride = 4;
  for (auto [frames, delta] : {std::pair{3, 1}, {8, 1}, {5, 2}, {9, 3}, {7, 3}}) {
    const Trajectory traj = small_trajectory(TrajectoryKind::kLinear, frames);
    const VectorFrameSource src = render_frames(scene, traj);
    cfg.delta = delta;
    const auto seq = reconstruct_sequence(src, cfg, traj, scene);
    CHECK(seq.size() == static_cast<std::size_t>(frames - 2 * delta));
    for (std::size_t i = 0; i < seq.size(); ++i) CHECK(seq[i].t == static_cast<int>(i) + delta);
    const auto again = reconstruct_sequence(src, cfg, traj, scene);
    for (std::size_t i = 0; i < seq.size(); ++i)
      CHECK(serialize_scene(seq[i]) == serialize_scene(again[i]));
  }
  const Trajectory traj = small_trajectory(TrajectoryKind::kStatic, 4);
  cfg.delta = 2;
  CHECK_THROWS_AS(reconstruct_sequence(render_frames(scene, traj), cfg, traj, scene), ConfigError);
}

TEST_CASE("static scenes reconstruct consistently over time") {
  const SceneSpec scene = SceneSpec::canonical();
  const Trajectory traj = small_trajectory(TrajectoryKind::kStatic);
  ReconConfig cfg;
  const auto seq = reconstruct_sequence(render_frames(scene, traj), cfg, traj, scene);
  const Camera cam = estimate_pose_stub(0, 0, traj);
  for (std::size_t i = 1; i < seq.size(); ++i) {
    const Image a = rasterize(seq[i - 1], cam, scene.background).color;
    const Image b = rasterize(seq[i], cam, scene.background).color;
    CHECK(rel_l1(Tensor({a.rgb.size()}, a.rgb), Tensor({b.rgb.size()}, b.rgb)) <= 1e-3);
  }
}

TEST_CASE("novel view evaluation") {
  const SceneSpec scene = SceneSpec::canonical();
  const Trajectory traj = small_trajectory(TrajectoryKind::kStatic);
  const VectorFrameSource frames = render_frames(scene, traj);
  ReconConfig cfg;
  const auto seq = reconstruct_sequence(frames, cfg, traj, scene, ReconMode::kEvaluation);
  std::vector<Image> held{frames.frame(2, 0), frames.frame(2, 1)};
  std::vector<Camera> cams{estimate_pose_stub(2, 0, traj), estimate_pose_stub(2, 1, traj)};
  const auto scores = novel_view_eval(seq, 2, held, cams, scene.background);
  REQUIRE(scores.size() == 2);
  for (const ViewScore& s : scores) {
    CHECK(s.psnr > 20.0);
    CHECK(s.ssim > 0.5);
  }
  CHECK_THROWS_AS(novel_view_eval(seq, 0, held, cams, scene.background), RangeError);
  cams.pop_back();
  CHECK_THROWS_AS(novel_view_eval(seq, 2, held, cams, scene.background), DimensionError);
}

TEST_CASE("frame sources and config validation") {
  const VectorFrameSource src({{Image(2, 2)}, {Image(2, 2)}});
  CHECK(src.frames() == 2);
  CHECK(src.views() == 1);
  CHECK_THROWS_AS(src.frame(2, 0), RangeError);
  CHECK_THROWS_AS(src.frame(0, 1), RangeError);

  ReconConfig c;
  c.delta = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("recon.delta"), ConfigError);
  c = ReconConfig{};
  c.neighbor_weight = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ReconConfig{};
  c.base_alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  SceneSpec s = SceneSpec::canonical();
  s.spheres[1].radius = -1;
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("scene.spheres[1].radius"), ConfigError);
  Trajectory t;
  t.near = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}
