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

#include "sf/gaussians.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sf/error.h"

namespace sf {

Mat3 mat_identity() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

Mat3 mat_mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
      c[i * 3 + j] = s;
    }
  return c;
}

Mat3 mat_transpose(const Mat3& a) {
  return {a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]};
}

Vec3 mat_apply(const Mat3& a, const Vec3& x) {
  return {a[0] * x[0] + a[1] * x[1] + a[2] * x[2],
          a[3] * x[0] + a[4] * x[1] + a[5] * x[2],
          a[6] * x[0] + a[7] * x[1] + a[8] * x[2]};
}

Quat quat_identity() { return {1.0, 0.0, 0.0, 0.0}; }

Quat quat_mul(const Quat& a, const Quat& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

Mat3 quat_to_matrix(const Quat& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
          2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)};
}

Mat3 rotation_y(double radians) {
  const double c = std::cos(radians), s = std::sin(radians);
  return {c, 0, s, 0, 1, 0, -s, 0, c};
}

Mat3 Gaussian3D::covariance() const {
  const Mat3 r = quat_to_matrix(rotation);
  Mat3 m = r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[i * 3 + j] *= scale[j] * scale[j];
  return mat_mul(m, mat_transpose(r));
}

void Gaussian3D::validate() const {
  for (double m : mu)
    if (!std::isfinite(m)) throw RangeError("gaussian.mu: non-finite");
  for (double s : scale)
    if (!(s > 0.0) || !std::isfinite(s))
      throw RangeError("gaussian.scale: must be finite and > 0");
  const double n = std::sqrt(rotation[0] * rotation[0] +
                             rotation[1] * rotation[1] +
                             rotation[2] * rotation[2] +
                             rotation[3] * rotation[3]);
  if (!(std::abs(n - 1.0) <= 1e-9))
    throw RangeError("gaussian.rotation: quaternion norm must be 1");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw RangeError("gaussian.alpha: must lie in [0, 1]");
  for (double c : color)
    if (!(c >= 0.0 && c <= 1.0))
      throw RangeError("gaussian.color: must lie in [0, 1]");
}

void Camera::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw ConfigError("camera.fx/fy: must be > 0");
  if (width <= 0 || height <= 0)
    throw ConfigError("camera.width/height: must be > 0");
  if (!(near > 0.0 && near < far))
    throw ConfigError("camera.near/far: need 0 < near < far");
  const Mat3 rtr = mat_mul(mat_transpose(R), R);
  const Mat3 id = mat_identity();
  for (int i = 0; i < 9; ++i)
    if (!(std::abs(rtr[i] - id[i]) <= 1e-9))
      throw ConfigError("camera.R: not orthonormal");
}

Vec3 Camera::to_camera(const Vec3& world) const {
  Vec3 c = mat_apply(R, world);
  for (int i = 0; i < 3; ++i) c[i] += trans[i];
  return c;
}

Vec3 Camera::to_world(const Vec3& cam) const {
  return mat_apply(mat_transpose(R),
                   {cam[0] - trans[0], cam[1] - trans[1], cam[2] - trans[2]});
}

Vec3 Camera::center() const { return to_world({0.0, 0.0, 0.0}); }

std::optional<Projected> project_gaussian(const Gaussian3D& g,
                                          const Camera& cam) {
  const Vec3 xc = cam.to_camera(g.mu);
  const double z = xc[2];
  if (!(z > cam.near && z < cam.far)) return std::nullopt;

  const Mat3 sc = mat_mul(mat_mul(cam.R, g.covariance()), mat_transpose(cam.R));
  // Jacobian of (fx x / z, fy y / z) at xc; third row is zero.
  const double j00 = cam.fx / z, j02 = -cam.fx * xc[0] / (z * z);
  const double j11 = cam.fy / z, j12 = -cam.fy * xc[1] / (z * z);
  // Rows of J * sc; the x row needs all three, the y row only two.
  const double a0 = j00 * sc[0] + j02 * sc[6], a1 = j00 * sc[1] + j02 * sc[7],
               a2 = j00 * sc[2] + j02 * sc[8];
  const double b1 = j11 * sc[4] + j12 * sc[7], b2 = j11 * sc[5] + j12 * sc[8];

  Projected p;
  p.mean_x = cam.fx * xc[0] / z + cam.cx;
  p.mean_y = cam.fy * xc[1] / z + cam.cy;
  p.depth = z;
  p.cov_xx = a0 * j00 + a2 * j02 + kLowPassDilation;
  p.cov_xy = a1 * j11 + a2 * j12;
  p.cov_yy = b1 * j11 + b2 * j12 + kLowPassDilation;
  const double det = p.cov_xx * p.cov_yy - p.cov_xy * p.cov_xy;
  p.inv_xx = p.cov_yy / det;
  p.inv_xy = -p.cov_xy / det;
  p.inv_yy = p.cov_xx / det;
  const double mid = 0.5 * (p.cov_xx + p.cov_yy);
  const double lmax = mid + std::sqrt(std::max(mid * mid - det, 0.0));
  // Slightly padded so binning never drops a pixel the cutoff admits.
  p.radius = 3.0 * std::sqrt(lmax) * (1.0 + 1e-9) + 1e-9;
  return p;
}

double footprint(const Projected& p, double x, double y) {
  const double dx = x - p.mean_x, dy = y - p.mean_y;
  const double m =
      p.inv_xx * dx * dx + 2.0 * p.inv_xy * dx * dy + p.inv_yy * dy * dy;
  if (m > kCutoffMahalanobis2) return 0.0;
  return std::exp(-0.5 * m);
}

RenderOutput rasterize(const FrameGaussians& fg, const Camera& cam,
                       const Vec3& background, const RasterConfig& cfg) {
  cam.validate();
  if (cfg.tile_size < 1) throw ConfigError("raster.tile_size: must be >= 1");
  const int w = cam.width, h = cam.height, ts = cfg.tile_size;
  const std::size_t npix = static_cast<std::size_t>(w) * h;

  struct Item {
    Projected p;
    std::size_t index;
  };
  std::vector<Item> items;
  items.reserve(fg.gaussians.size());
  for (std::size_t i = 0; i < fg.gaussians.size(); ++i) {
    if (auto p = project_gaussian(fg.gaussians[i], cam)) items.push_back({*p, i});
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return a.p.depth < b.p.depth;
  });

  const int tiles_x = (w + ts - 1) / ts, tiles_y = (h + ts - 1) / ts;
  std::vector<std::vector<std::uint32_t>> bins(
      static_cast<std::size_t>(tiles_x) * tiles_y);
  for (std::size_t s = 0; s < items.size(); ++s) {
    const Projected& p = items[s].p;
    const double x0 = std::ceil(p.mean_x - p.radius),
                 x1 = std::floor(p.mean_x + p.radius),
                 y0 = std::ceil(p.mean_y - p.radius),
                 y1 = std::floor(p.mean_y + p.radius);
    if (x1 < 0 || y1 < 0 || x0 > w - 1 || y0 > h - 1 || x0 > x1 || y0 > y1)
      continue;
    const int tx0 = static_cast<int>(std::max(x0, 0.0)) / ts;
    const int tx1 = static_cast<int>(std::min(x1, w - 1.0)) / ts;
    const int ty0 = static_cast<int>(std::max(y0, 0.0)) / ts;
    const int ty1 = static_cast<int>(std::min(y1, h - 1.0)) / ts;
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(
            static_cast<std::uint32_t>(s));
  }

  RenderOutput out;
  out.color = Image(w, h);
  out.depth.assign(npix, 0.0);
  out.transmittance.assign(npix, 1.0);
  out.weight_sum.assign(npix, 0.0);
  for (int ty = 0; ty < tiles_y; ++ty) {
    for (int tx = 0; tx < tiles_x; ++tx) {
      const auto& bin = bins[static_cast<std::size_t>(ty) * tiles_x + tx];
      for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
        for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
          double t = 1.0, wsum = 0.0, dsum = 0.0;
          double c[3] = {0.0, 0.0, 0.0};
          for (std::uint32_t s : bin) {
            const Item& it = items[s];
            const double g = footprint(it.p, x, y);
            if (g == 0.0) continue;
            const Gaussian3D& gs = fg.gaussians[it.index];
            const double a = gs.alpha * g;
            const double wt = a * t;
            for (int k = 0; k < 3; ++k) c[k] += wt * gs.color[k];
            dsum += wt * it.p.depth;
            wsum += wt;
            t *= 1.0 - a;
            if (t < kMinTransmittance) break;
          }
          const std::size_t pi = static_cast<std::size_t>(y) * w + x;
          for (int k = 0; k < 3; ++k)
            out.color.at(x, y, k) = c[k] + t * background[k];
          out.depth[pi] = dsum / std::max(wsum, 1e-12);
          out.transmittance[pi] = t;
          out.weight_sum[pi] = wsum;
        }
      }
    }
  }
  return out;
}

namespace {

constexpr std::size_t kHeaderBytes = 8 + 8 + 8;
constexpr std::size_t kValuesPerGaussian = 14;

void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& s, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[off + i]))
         << (8 * i);
  return v;
}

}  // namespace

std::string serialize_scene(const FrameGaussians& fg) {
  std::string s(kSceneMagic, 8);
  s.reserve(kHeaderBytes + fg.gaussians.size() * kValuesPerGaussian * 8);
  put_u64(s, static_cast<std::uint64_t>(fg.t));
  put_u64(s, fg.gaussians.size());
  for (const Gaussian3D& g : fg.gaussians) {
    const double vals[kValuesPerGaussian] = {
        g.mu[0],       g.mu[1],       g.mu[2],       g.scale[0], g.scale[1],
        g.scale[2],    g.rotation[0], g.rotation[1], g.rotation[2],
        g.rotation[3], g.alpha,       g.color[0],    g.color[1], g.color[2]};
    for (double v : vals) put_u64(s, std::bit_cast<std::uint64_t>(v));
  }
  return s;
}

FrameGaussians deserialize_scene(const std::string& bytes) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kSceneMagic, 8))
    throw IoError("scene: bad magic or truncated header");
  FrameGaussians fg;
  fg.t = static_cast<std::int64_t>(get_u64(bytes, 8));
  const std::uint64_t count = get_u64(bytes, 16);
  const std::size_t per = kValuesPerGaussian * 8;
  if (count > (bytes.size() - kHeaderBytes) / per ||
      bytes.size() != kHeaderBytes + count * per) {
    throw IoError("scene: size does not match gaussian count " +
                  std::to_string(count));
  }
  fg.gaussians.resize(count);
  std::size_t off = kHeaderBytes;
  for (Gaussian3D& g : fg.gaussians) {
    double v[kValuesPerGaussian];
    for (double& x : v) {
      x = std::bit_cast<double>(get_u64(bytes, off));
      off += 8;
    }
    g.mu = {v[0], v[1], v[2]};
    g.scale = {v[3], v[4], v[5]};
    g.rotation = {v[6], v[7], v[8], v[9]};
    g.alpha = v[10];
    g.color = {v[11], v[12], v[13]};
    try {
      g.validate();
    } catch (const RangeError& e) {
      throw IoError(std::string("scene: invalid gaussian: ") + e.what());
    }
  }
  return fg;
}

void write_scene(const std::filesystem::path& path, const FrameGaussians& fg) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  const std::string s = serialize_scene(fg);
  if (!f || !f.write(s.data(), static_cast<std::streamsize>(s.size())) ||
      !f.flush()) {
    throw IoError("cannot write scene file " + path.string());
  }
}

FrameGaussians read_scene(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open scene file " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  try {
    return deserialize_scene(os.str());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace sf
