// SPDX-License-Identifier: Apache-2.0
#ifndef CCL_CORE_TENSOR_HPP
#define CCL_CORE_TENSOR_HPP

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "core/common.hpp"
#include "core/rng.hpp"

namespace ccl {

// Dense row-major tensor of doubles. The whole math core runs in double so
// finite-difference gradient checks are meaningful.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(count(shape), 0.0) {}
  Tensor(std::vector<int> s, double fill) : shape(std::move(s)), v(count(shape), fill) {}

  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(v.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  double& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
  const double& operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  static Tensor scalar_value(double x) {
    Tensor t(std::vector<int>{});
    t[0] = x;
    return t;
  }

  static Tensor randn(std::vector<int> s, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(s));
    for (auto& x : t.v) x = rng.normal() * stddev;
    return t;
  }
};

// 32-bit float array used for on-disk corpus data; kept distinct from Tensor so
// round-trips through the file format are bitwise.
struct FloatArray {
  std::vector<int> shape;
  std::vector<float> v;

  FloatArray() = default;
  explicit FloatArray(std::vector<int> s) : shape(std::move(s)), v(Tensor::count(shape), 0.0f) {}

  int64_t size() const { return static_cast<int64_t>(v.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  float& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
  const float& operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

  Tensor to_tensor() const {
    Tensor t(shape);
    for (int64_t i = 0; i < size(); ++i) t[i] = v[static_cast<size_t>(i)];
    return t;
  }
};

}  // namespace ccl

#endif
