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

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sf {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major real array. Extents are always positive.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor from_rows(
      std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2-D element access; only valid on rank-2 tensors.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  // Same buffer, new extents. Throws DimensionError if the count differs.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& x);

// In-place row softmax over a raw [rows, cols] buffer.
void softmax_rows_inplace(double* x, std::size_t rows, std::size_t cols);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// Pseudo-Gaussian samples with zero mean and unit variance. The generator is
// std::mt19937_64 (whose output sequence is fixed by the C++ standard) and
// each sample is the Irwin-Hall sum of twelve 53-bit uniforms minus six. Only
// exactly-rounded arithmetic is involved, so a (seed, shape) pair yields the
// same bits on every conforming platform.
Tensor seeded_normal(const Shape& shape, std::uint64_t seed);

// mean(|a - b|) / mean(|a|)
double rel_l1(const Tensor& a, const Tensor& b);

// Least-squares polynomial, coefficients lowest degree first.
struct Polynomial {
  std::vector<double> coefficients;

  std::size_t degree() const {
    return coefficients.empty() ? 0 : coefficients.size() - 1;
  }
  double operator()(double x) const;

  static Polynomial identity() { return Polynomial{{0.0, 1.0}}; }

  friend bool operator==(const Polynomial&, const Polynomial&) = default;
};

Polynomial polyfit(std::span<const double> xs, std::span<const double> ys,
                   std::size_t degree);

// Sum of squared residuals of p on the samples.
double poly_residual(const Polynomial& p, std::span<const double> xs,
                     std::span<const double> ys);

}  // namespace sf
