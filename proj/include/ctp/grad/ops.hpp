#pragma once

#include <span>
#include <vector>

#include "ctp/grad/tape.hpp"

namespace ctp {

// Differentiable primitives. Each records its output on the operands' tape
// together with the reverse-mode rule. Shapes follow the storage convention of
// Array: rank-3 operands are {B, C, T} stored as B rows of C*T values.

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b);

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);

/// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);

/// Elementwise quotient.
template <typename Scalar>
Var<Scalar> div(const Var<Scalar>& a, const Var<Scalar>& b);

/// a (r x c) plus a row vector (1 x c or shape {c}) added to every row.
template <typename Scalar>
Var<Scalar> add_bias(const Var<Scalar>& a, const Var<Scalar>& bias);

/// Repeats a single row `rows` times.
template <typename Scalar>
Var<Scalar> broadcast_rows(const Var<Scalar>& row, Index rows);

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor);

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar offset);

template <typename Scalar>
Var<Scalar> neg(const Var<Scalar>& a) {
  return scale(a, Scalar(-1));
}

enum class MapFn { tanh, sigmoid, relu, exp, log };

/// Applies one of the named scalar functions per element. `log` requires
/// strictly positive inputs and throws NumericError otherwise.
template <typename Scalar>
Var<Scalar> elementwise_map(const Var<Scalar>& x, MapFn fn);

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> log(const Var<Scalar>& x);

/// log(max(x, 1e-12)); the floor has zero gradient.
template <typename Scalar>
Var<Scalar> safe_log(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope);

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& x);

/// Sum of all elements, as a scalar.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x);

/// Smallest of a set of scalars; the gradient flows to the first minimizer.
template <typename Scalar>
Var<Scalar> minimum(std::span<const Var<Scalar>> xs);

template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts);

template <typename Scalar>
Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts);

template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& x, Index start, Index count);

template <typename Scalar>
Var<Scalar> slice_rows(const Var<Scalar>& x, Index start, Index count);

/// Reinterprets the row-major payload under a new shape of equal size.
template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape);

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& x);

/// E(i, j) = s(i) + d(j) for column vectors s (n x 1) and d (m x 1).
template <typename Scalar>
Var<Scalar> outer_sum(const Var<Scalar>& s, const Var<Scalar>& d);

/// Row-wise softmax with max subtraction.
template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& x);

/// Sliding-window correlation along the last axis.
/// x: {C_in, T} or {B, C_in, T}; kernel: {C_out, C_in, k}.
/// Output: {C_out, T_out} or {B, C_out, T_out} with T_out = T + 2*pad - k + 1.
template <typename Scalar>
Var<Scalar> temporal_conv(const Var<Scalar>& x, const Var<Scalar>& kernel, Index pad);

/// As above plus a per-output-channel bias of shape {C_out}.
template <typename Scalar>
Var<Scalar> temporal_conv(const Var<Scalar>& x, const Var<Scalar>& kernel, const Var<Scalar>& bias,
                          Index pad);

/// Mixes nodes per time step: out(i, c, t) = sum_j adjacency[t](i, j) * x(j, c, t).
/// x: {N, C, T}; adjacency holds T constant N x N matrices.
template <typename Scalar>
Var<Scalar> graph_conv(const Var<Scalar>& x, const std::vector<Matrix<Scalar>>& adjacency);

/// {B, C, T} -> {B, T, C}.
template <typename Scalar>
Var<Scalar> swap_last_axes(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  return add(a, b);
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  return sub(a, b);
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a) {
  return neg(a);
}

}  // namespace ctp
