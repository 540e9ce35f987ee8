#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "ser/errors.hpp"

namespace ser {

/// Dense row-major n-dimensional array of doubles with an optional
/// same-shape gradient buffer.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until ensure_grad()

  Tensor() = default;

  explicit Tensor(std::vector<size_t> s, double fill = 0.0)
      : shape(std::move(s)) {
    data.assign(count(shape), fill);
  }

  static size_t count(const std::vector<size_t>& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
  }

  size_t numel() const { return data.size(); }
  size_t rank() const { return shape.size(); }

  size_t dim(size_t i) const {
    if (i >= shape.size()) throw ShapeError("tensor dim out of range");
    return shape[i];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  /// Element access for the [batch, channel, length] layout.
  double& at3(size_t b, size_t c, size_t l) {
    return data[(b * shape[1] + c) * shape[2] + l];
  }
  double at3(size_t b, size_t c, size_t l) const {
    return data[(b * shape[1] + c) * shape[2] + l];
  }

  double& at2(size_t r, size_t c) { return data[r * shape[1] + c]; }
  double at2(size_t r, size_t c) const { return data[r * shape[1] + c]; }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }

  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  }

  /// Reinterprets the buffer under a new shape with the same element count.
  Tensor reshaped(std::vector<size_t> new_shape) const {
    if (count(new_shape) != numel()) {
      throw ShapeError("reshape changes element count");
    }
    Tensor t;
    t.shape = std::move(new_shape);
    t.data = data;
    return t;
  }
};

/// Named handle to a parameter tensor (weights or persistent state).
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

}  // namespace ser
