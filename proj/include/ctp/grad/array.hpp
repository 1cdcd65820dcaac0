#pragma once

#include <Eigen/Core>

#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "ctp/util/errors.hpp"

namespace ctp {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

/// Dense storage layout for a logical shape: the leading axis becomes the
/// matrix rows and every remaining axis is flattened row-major into columns.
/// Scalars are 1x1 and vectors are stored as a single row.
inline std::pair<Index, Index> storage_dims(const Shape& shape) {
  if (shape.empty()) return {1, 1};
  if (shape.size() == 1) return {1, shape[0]};
  return {shape[0], shape_size(shape) / (shape[0] == 0 ? 1 : shape[0])};
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// A shaped block of values. Every differentiable quantity in the library,
/// from model parameters to per-pedestrian features, is carried as one.
template <typename Scalar>
struct Array {
  Shape shape;
  Matrix<Scalar> values;
  bool requires_grad = false;

  Array() = default;

  Array(Shape s, Matrix<Scalar> v, bool grad = false)
      : shape(std::move(s)), values(std::move(v)), requires_grad(grad) {
    check();
  }

  static Array zeros(Shape s) {
    auto [r, c] = storage_dims(s);
    return Array(std::move(s), Matrix<Scalar>::Zero(r, c));
  }

  static Array matrix(Matrix<Scalar> v) {
    Shape s{v.rows(), v.cols()};
    return Array(std::move(s), std::move(v));
  }

  Index size() const { return values.size(); }
  Index rank() const { return static_cast<Index>(shape.size()); }

  void check() const {
    auto [r, c] = storage_dims(shape);
    if (values.rows() != r || values.cols() != c) {
      throw DimensionError("array storage " + std::to_string(values.rows()) + "x" +
                           std::to_string(values.cols()) + " does not hold shape " +
                           shape_string(shape));
    }
  }

  template <typename Other>
  Array<Other> cast() const {
    return Array<Other>(shape, values.template cast<Other>(), requires_grad);
  }
};

}  // namespace ctp
