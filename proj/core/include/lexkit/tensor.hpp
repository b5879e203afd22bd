// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lexkit::nn {

/// Dense row-major tensor of doubles. Shapes are dynamic; all the models in
/// this project are small enough that double precision everywhere is cheap
/// and makes the finite-difference checks straightforward.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape);
  Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::int64_t> shape);
  static Tensor scalar(double v);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t rank() const { return shape_.size(); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  /// 2D accessors; valid only when rank() == 2.
  std::int64_t rows() const { return shape_[0]; }
  std::int64_t cols() const { return shape_[1]; }
  double& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }

  double item() const;  // rank-0 or single-element tensor

  void fill(double v);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  /// Throws std::runtime_error naming `what` if any value is NaN/Inf.
  void check_finite(const std::string& what) const;

  std::string shape_str() const;

private:
  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

std::int64_t shape_product(const std::vector<std::int64_t>& shape);

}  // namespace lexkit::nn
