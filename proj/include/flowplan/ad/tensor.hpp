// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_AD_TENSOR_HPP
#define FLOWPLAN_AD_TENSOR_HPP

#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowplan::ad {

/// Dense row-major n-d array. Scalar is float in the training path and double
/// in gradient-check mode.
template <typename Scalar>
struct Tensor {
  std::vector<int> shape;
  std::vector<Scalar> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), Scalar(0)) {}
  Tensor(std::vector<int> s, std::vector<Scalar> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape)) {
      throw std::invalid_argument("Tensor: data size does not match shape " + shape_str(shape));
    }
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t numel() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<Other>(data[i]);
    return out;
  }

  static std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
  }
};

inline bool same_shape(const std::vector<int>& a, const std::vector<int>& b) { return a == b; }

}  // namespace flowplan::ad

#endif  // FLOWPLAN_AD_TENSOR_HPP
