#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ikt/error.hpp"

namespace ikt::num {

// Dense row-major tensor of 64-bit floats. Shapes are explicit; there is no
// broadcasting machinery beyond the helpers below.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)), v(numel(shape), 0.0) {}

  Tensor(std::vector<std::size_t> s, std::vector<double> data)
      : shape(std::move(s)), v(std::move(data)) {
    if (v.size() != numel(shape))
      throw NumericError("shape", "tensor data length does not match shape");
  }

  static std::size_t numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  std::size_t size() const { return v.size(); }

  std::size_t rows() const {
    require_2d();
    return shape[0];
  }

  std::size_t cols() const {
    require_2d();
    return shape[1];
  }

  double& at(std::size_t i, std::size_t j) { return v[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * shape[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(double x) {
    for (double& e : v) e = x;
  }

  bool all_finite() const {
    for (double e : v)
      if (!std::isfinite(e)) return false;
    return true;
  }

  void require_2d() const {
    if (shape.size() != 2)
      throw NumericError("shape", "expected a rank-2 tensor");
  }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

inline void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw NumericError("shape", "add_inplace: shape mismatch");
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  Tensor c = a;
  add_inplace(c, b);
  return c;
}

inline void scale_inplace(Tensor& a, double s) {
  for (double& e : a.v) e *= s;
}

// Adds a length-c row vector to every row of an n-by-c matrix.
inline void add_row_vector(Tensor& a, const Tensor& row) {
  if (a.cols() != row.size())
    throw NumericError("shape", "add_row_vector: width mismatch");
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) a.at(i, j) += row.v[j];
}

// Trainable tensor with its gradient and momentum buffer. The three tensors
// always share one shape.
struct Parameter {
  Tensor value;
  Tensor grad;
  Tensor velocity;

  Parameter() = default;

  explicit Parameter(std::vector<std::size_t> shape)
      : value(shape), grad(shape), velocity(std::move(shape)) {}

  void zero_grad() { grad.fill(0.0); }
  void zero_velocity() { velocity.fill(0.0); }
};

}  // namespace ikt::num
