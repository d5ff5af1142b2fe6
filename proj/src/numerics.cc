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

#include "sf/numerics.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "sf/error.h"
#include "sf/kernels.h"

namespace sf {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

namespace {

void check_extents(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must be non-empty");
  for (std::size_t e : shape) {
    if (e == 0) {
      throw DimensionError("tensor extents must be positive, got " +
                           shape_str(shape));
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::from_rows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  check_extents(shape);
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " +
                         shape_str(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul expects rank-2 operands");
  }
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner extents differ " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  kernels::active().gemm(m, n, k, a.ptr(), k, b.ptr(), n, c.ptr(), n);
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose expects rank 2");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor t({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t[j * r + i] = a[i * c + j];
  return t;
}

void softmax_rows_inplace(double* x, std::size_t rows, std::size_t cols) {
  kernels::active().softmax_rows(x, rows, cols);
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("softmax_rows expects rank 2");
  Tensor y = x;
  softmax_rows_inplace(y.ptr(), y.dim(0), y.dim(1));
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  return c;
}

Tensor scale(const Tensor& a, double s) {
  Tensor c = a;
  for (double& v : c.data()) v *= s;
  return c;
}

Tensor seeded_normal(const Shape& shape, std::uint64_t seed) {
  check_extents(shape);
  std::mt19937_64 gen(seed);
  constexpr double kUnit = 1.0 / 9007199254740992.0;  // 2^-53
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += static_cast<double>(gen() >> 11) * kUnit;
    v = s - 6.0;
  }
  return Tensor(shape, std::move(data));
}

double rel_l1(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "rel_l1");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::abs(a[i] - b[i]);
    den += std::abs(a[i]);
  }
  if (den == 0.0) {
    throw DegenerateReferenceError("rel_l1: reference tensor is all zeros");
  }
  return num / den;
}

double Polynomial::operator()(double x) const {
  double y = 0.0;
  for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) {
    y = y * x + *it;
  }
  return y;
}

Polynomial polyfit(std::span<const double> xs, std::span<const double> ys,
                   std::size_t degree) {
  if (xs.size() != ys.size()) {
    throw DimensionError("polyfit: xs and ys differ in length");
  }
  const std::size_t n = xs.size();
  const std::size_t cols = degree + 1;
  if (n < cols) {
    throw SingularFitError("polyfit: " + std::to_string(n) +
                           " samples cannot determine degree " +
                           std::to_string(degree));
  }
  double span = 0.0;
  for (double x : xs) span = std::max(span, std::abs(x));
  if (span == 0.0) span = 1.0;

  // Columns are powers of x / span so the Vandermonde matrix stays within
  // [-1, 1]; coefficients are unscaled afterwards.
  Eigen::MatrixXd v(n, cols);
  Eigen::VectorXd rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = xs[i] / span;
    double p = 1.0;
    for (std::size_t j = 0; j < cols; ++j) {
      v(i, j) = p;
      p *= t;
    }
    rhs(i) = ys[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(v);
  qr.setThreshold(1e-12);
  if (static_cast<std::size_t>(qr.rank()) < cols) {
    throw SingularFitError("polyfit: rank-deficient system (rank " +
                           std::to_string(qr.rank()) + " < " +
                           std::to_string(cols) + ")");
  }
  const Eigen::VectorXd sol = qr.solve(rhs);
  Polynomial p;
  p.coefficients.resize(cols);
  double s = 1.0;
  for (std::size_t j = 0; j < cols; ++j) {
    p.coefficients[j] = sol(j) / s;
    s *= span;
  }
  return p;
}

double poly_residual(const Polynomial& p, std::span<const double> xs,
                     std::span<const double> ys) {
  double r = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = p(xs[i]) - ys[i];
    r += e * e;
  }
  return r;
}

}  // namespace sf
