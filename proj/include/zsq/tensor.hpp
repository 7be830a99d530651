// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "zsq/common.hpp"

namespace zsq {

/// Dense row-major tensor of 64-bit reals. The one value carrier of the lab.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(numel_of(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    ZSQ_CHECK(data_.size() == numel_of(shape_), "tensor data length does not match shape");
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  static Tensor full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = v;
    return t;
  }

  std::size_t numel() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }

  // Rank-2 accessors. Most live tensors here are [batch, features].
  std::size_t rows() const {
    ZSQ_CHECK(rank() == 2, "rows() requires rank-2 tensor");
    return shape_[0];
  }
  std::size_t cols() const {
    ZSQ_CHECK(rank() == 2, "cols() requires rank-2 tensor");
    return shape_[1];
  }

  double& at(std::size_t i) { return data_[i]; }
  double at(std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double min_value() const {
    ZSQ_CHECK(!data_.empty(), "min_value of empty tensor");
    double m = data_[0];
    for (double v : data_) m = v < m ? v : m;
    return m;
  }

  double max_value() const {
    ZSQ_CHECK(!data_.empty(), "max_value of empty tensor");
    double m = data_[0];
    for (double v : data_) m = v > m ? v : m;
    return m;
  }

  static std::size_t numel_of(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
      ZSQ_CHECK(d > 0, "tensor dimensions must be positive");
      n *= d;
    }
    return shape.empty() ? 0 : n;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline std::string shape_str(const Tensor& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.shape().size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape()[i]);
  }
  return s + "]";
}

}  // namespace zsq
