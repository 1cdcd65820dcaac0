#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ctp/grad/ops.hpp"
#include "ctp/grad/parameters.hpp"
#include "ctp/util/rng.hpp"

namespace ctp {

// Parameter naming: a layer called "foo" owns "foo.w", "foo.b", and for the
// recurrent and attention layers "foo.wx", "foo.wh", "foo.a_src", "foo.a_dst".

template <typename Scalar>
void add_linear(ParameterStore<Scalar>& store, const std::string& name, Index in, Index out, Rng& rng);

template <typename Scalar>
void add_lstm(ParameterStore<Scalar>& store, const std::string& name, Index in, Index hidden, Rng& rng);

template <typename Scalar>
void add_gat(ParameterStore<Scalar>& store, const std::string& name, Index in, Index heads, Index head_dim,
             Rng& rng);

/// Kernel {out, in, k} and bias {out}.
template <typename Scalar>
void add_conv(ParameterStore<Scalar>& store, const std::string& name, Index in, Index out, Index k, Rng& rng);

/// x (r x in) -> r x out.
template <typename Scalar>
Var<Scalar> linear(const Binding<Scalar>& p, const std::string& name, const Var<Scalar>& x);

template <typename Scalar>
struct LstmState {
  Var<Scalar> h;
  Var<Scalar> c;
};

/// Standard LSTM update with gates ordered (input, forget, output, cell).
/// x: N x in, h and c: N x H.
template <typename Scalar>
LstmState<Scalar> lstm_cell(const Binding<Scalar>& p, const std::string& name, const Var<Scalar>& x,
                            const LstmState<Scalar>& state);

/// Multi-head additive graph attention. Scores e_ij = leaky_relu(a_src.Wh_i +
/// a_dst.Wh_j, 0.2), softmax over j, heads concatenated, bias added, tanh.
/// `mask` (N x N, 0 or a large negative number) restricts attention to the
/// node's own scene when several scenes share a batch; pass an invalid Var to
/// attend to every node.
template <typename Scalar>
Var<Scalar> gat_layer(const Binding<Scalar>& p, const std::string& name, const Var<Scalar>& x, Index heads,
                      const Var<Scalar>& mask);

/// Normalized inverse-distance adjacency of one frame (positions N x 2):
/// a_ij = 1/|p_i - p_j| for distinct points, 0 for coincident ones, then
/// D^-1/2 (A + I) D^-1/2.
Matrix<double> adjacency_from_positions(const Matrix<double>& positions);

}  // namespace ctp
