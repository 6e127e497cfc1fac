#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "moc/common.hpp"

namespace moc {

// Dense row-major array of 64-bit floats, rank 1 or 2 in practice.
// Scalars are represented as shape {1}.
class NumArray {
 public:
  NumArray() = default;

  explicit NumArray(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (std::size_t d : shape_) n *= d;
    values_.assign(n, 0.0);
  }

  static NumArray scalar(double v) {
    NumArray a({1});
    a.values_[0] = v;
    return a;
  }

  static NumArray from(std::vector<std::size_t> shape, std::vector<double> values) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    require(n == values.size(), ErrorCategory::shape,
            "value count does not match the requested shape");
    NumArray a;
    a.shape_ = std::move(shape);
    a.values_ = std::move(values);
    return a;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }

  std::size_t rows() const {
    require(rank() == 2, ErrorCategory::shape, "rows() requires a rank-2 array");
    return shape_[0];
  }
  std::size_t cols() const {
    require(rank() == 2, ErrorCategory::shape, "cols() requires a rank-2 array");
    return shape_[1];
  }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }

  double scalar_value() const {
    require(size() == 1, ErrorCategory::shape, "scalar_value() requires a 1-element array");
    return values_[0];
  }

  void fill(double v) {
    for (double& x : values_) x = v;
  }

  bool same_shape(const NumArray& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (double x : values_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

inline std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  s += ")";
  return s;
}

inline std::string shape_string(const NumArray& a) { return shape_string(a.shape()); }

}  // namespace moc
