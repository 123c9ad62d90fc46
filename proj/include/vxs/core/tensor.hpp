#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "vxs/core/error.hpp"

namespace vxs {

/// Dense row-major double tensor. The last axis varies fastest.
/// All differentiable math in this library runs in 64-bit precision;
/// persistent grid state is float32 (see field/grid.hpp).
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    VXS_CHECK(static_cast<int64_t>(data.size()) == numel_of(shape), InvalidInput,
              "tensor data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
  double& at(int i, int j, int k) {
    return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  double at(int i, int j, int k) const {
    return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

}  // namespace vxs
