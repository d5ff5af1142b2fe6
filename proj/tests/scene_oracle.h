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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "sf/gaussians.h"

namespace sf::testing {

// Random scene in front of a 64x64 camera at the origin looking down +z.
inline FrameGaussians random_scene(std::uint64_t seed, std::size_t max_n = 50) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FrameGaussians fg;
  fg.t = static_cast<std::int64_t>(seed);
  const std::size_t n = 1 + rng() % max_n;
  for (std::size_t i = 0; i < n; ++i) {
    Gaussian3D g;
    const double z = -1.0 + 12.0 * u(rng);  // a few land behind the camera
    g.mu = {(u(rng) - 0.5) * 0.8 * std::abs(z) + 0.1, (u(rng) - 0.5) * 0.8 * std::abs(z), z};
    g.scale = {0.05 + 0.5 * u(rng), 0.05 + 0.5 * u(rng), 0.05 + 0.5 * u(rng)};
    Quat q{u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5};
    const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    for (double& c : q) c /= norm;
    g.rotation = q;
    g.alpha = i % 4 == 0 ? 1.0 : 0.05 + 0.95 * u(rng);
    g.color = {u(rng), u(rng), u(rng)};
    fg.gaussians.push_back(g);
  }
  return fg;
}

inline Camera test_camera(int size = 64) {
  Camera c;
  c.width = c.height = size;
  c.fx = c.fy = 60.0;
  c.cx = c.cy = (size - 1) / 2.0;
  c.near = 0.2;
  c.far = 100.0;
  return c;
}

struct OracleRender {
  std::vector<double> rgb;  // interleaved
  std::vector<double> depth, transmittance, weight_sum;
};

// Every gaussian against every pixel with plain matrix algebra; no tiles,
// no bounding radius.
inline OracleRender brute_force_render(const FrameGaussians& fg, const Camera& cam,
                                       const Vec3& bg) {
  struct P {
    double mx, my, depth, ixx, ixy, iyy;
    std::size_t idx;
  };
  auto mul = [](const double* a, const double* b, double* c, int n, int m, int k) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) {
        double s = 0.0;
        for (int p = 0; p < m; ++p) s += a[i * m + p] * b[p * k + j];
        c[i * k + j] = s;
      }
  };
  std::vector<P> ps;
  for (std::size_t i = 0; i < fg.gaussians.size(); ++i) {
    const Gaussian3D& g = fg.gaussians[i];
    double xc[3];
    for (int r = 0; r < 3; ++r)
      xc[r] = cam.R[r * 3] * g.mu[0] + cam.R[r * 3 + 1] * g.mu[1] +
              cam.R[r * 3 + 2] * g.mu[2] + cam.trans[r];
    if (!(xc[2] > cam.near && xc[2] < cam.far)) continue;
    const double w = g.rotation[0], x = g.rotation[1], y = g.rotation[2], z = g.rotation[3];
    const double rot[9] = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
                           2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                           2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)};
    double m[9], rt[9], s3[9] = {}, cov[9];
    for (int r = 0; r < 3; ++r) s3[r * 4] = g.scale[r] * g.scale[r];
    mul(rot, s3, m, 3, 3, 3);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rt[r * 3 + c] = rot[c * 3 + r];
    mul(m, rt, cov, 3, 3, 3);
    double camR[9], camRt[9], tmp[9], cc[9];
    for (int k = 0; k < 9; ++k) camR[k] = cam.R[k];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) camRt[r * 3 + c] = cam.R[c * 3 + r];
    mul(camR, cov, tmp, 3, 3, 3);
    mul(tmp, camRt, cc, 3, 3, 3);
    const double J[6] = {cam.fx / xc[2], 0, -cam.fx * xc[0] / (xc[2] * xc[2]),
                         0, cam.fy / xc[2], -cam.fy * xc[1] / (xc[2] * xc[2])};
    double Jt[6], jc[6], c2[4];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 2; ++c) Jt[r * 2 + c] = J[c * 3 + r];
    mul(J, cc, jc, 2, 3, 3);
    mul(jc, Jt, c2, 2, 3, 2);
    c2[0] += 0.3;
    c2[3] += 0.3;
    const double det = c2[0] * c2[3] - c2[1] * c2[2];
    ps.push_back({cam.fx * xc[0] / xc[2] + cam.cx, cam.fy * xc[1] / xc[2] + cam.cy, xc[2],
                  c2[3] / det, -c2[1] / det, c2[0] / det, i});
  }
  std::stable_sort(ps.begin(), ps.end(), [](const P& a, const P& b) { return a.depth < b.depth; });

  OracleRender out;
  const std::size_t npix = static_cast<std::size_t>(cam.width) * cam.height;
  out.rgb.resize(npix * 3);
  out.depth.resize(npix);
  out.transmittance.resize(npix);
  out.weight_sum.resize(npix);
  for (int py = 0; py < cam.height; ++py)
    for (int px = 0; px < cam.width; ++px) {
      double T = 1.0, ws = 0.0, ds = 0.0, col[3] = {0, 0, 0};
      for (const P& p : ps) {
        const double dx = px - p.mx, dy = py - p.my;
        const double maha = p.ixx * dx * dx + 2 * p.ixy * dx * dy + p.iyy * dy * dy;
        if (maha > 9.0) continue;
        const Gaussian3D& g = fg.gaussians[p.idx];
        const double a = g.alpha * std::exp(-0.5 * maha);
        for (int k = 0; k < 3; ++k) col[k] += a * T * g.color[k];
        ds += a * T * p.depth;
        ws += a * T;
        T *= 1 - a;
        if (T < 1e-4) break;
      }
      const std::size_t i = static_cast<std::size_t>(py) * cam.width + px;
      for (int k = 0; k < 3; ++k) out.rgb[i * 3 + k] = col[k] + T * bg[k];
      out.depth[i] = ds / std::max(ws, 1e-12);
      out.transmittance[i] = T;
      out.weight_sum[i] = ws;
    }
  return out;
}

}  // namespace sf::testing
