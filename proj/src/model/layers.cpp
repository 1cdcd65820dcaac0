#include "ctp/model/layers.hpp"

#include <cmath>

namespace ctp {
namespace {

template <typename Scalar>
Matrix<Scalar> xavier(Index fan_in, Index fan_out, Index rows, Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(rng.uniform(-limit, limit));
  return m;
}

}  // namespace

template <typename Scalar>
void add_linear(ParameterStore<Scalar>& store, const std::string& name, Index in, Index out, Rng& rng) {
  store.add(name + ".w", Array<Scalar>({in, out}, xavier<Scalar>(in, out, in, out, rng)));
  store.add(name + ".b", Array<Scalar>::zeros({out}));
}

template <typename Scalar>
void add_lstm(ParameterStore<Scalar>& store, const std::string& name, Index in, Index hidden, Rng& rng) {
  store.add(name + ".wx", Array<Scalar>({in, 4 * hidden}, xavier<Scalar>(in, hidden, in, 4 * hidden, rng)));
  store.add(name + ".wh", Array<Scalar>({hidden, 4 * hidden}, xavier<Scalar>(hidden, hidden, hidden, 4 * hidden, rng)));
  Array<Scalar> b = Array<Scalar>::zeros({4 * hidden});
  b.values.middleCols(hidden, hidden).setOnes();
  store.add(name + ".b", std::move(b));
}

template <typename Scalar>
void add_gat(ParameterStore<Scalar>& store, const std::string& name, Index in, Index heads, Index head_dim,
             Rng& rng) {
  store.add(name + ".w", Array<Scalar>({in, heads * head_dim}, xavier<Scalar>(in, head_dim, in, heads * head_dim, rng)));
  store.add(name + ".a_src", Array<Scalar>({head_dim, heads}, xavier<Scalar>(head_dim, 1, head_dim, heads, rng)));
  store.add(name + ".a_dst", Array<Scalar>({head_dim, heads}, xavier<Scalar>(head_dim, 1, head_dim, heads, rng)));
  store.add(name + ".b", Array<Scalar>::zeros({heads * head_dim}));
}

template <typename Scalar>
void add_conv(ParameterStore<Scalar>& store, const std::string& name, Index in, Index out, Index k, Rng& rng) {
  store.add(name + ".w", Array<Scalar>({out, in, k}, xavier<Scalar>(in * k, out * k, out, in * k, rng)));
  store.add(name + ".b", Array<Scalar>::zeros({out}));
}

template <typename Scalar>
Var<Scalar> linear(const Binding<Scalar>& p, const std::string& name, const Var<Scalar>& x) {
  return add_bias(matmul(x, p[name + ".w"]), p[name + ".b"]);
}

template <typename Scalar>
LstmState<Scalar> lstm_cell(const Binding<Scalar>& p, const std::string& name, const Var<Scalar>& x,
                            const LstmState<Scalar>& state) {
  const Var<Scalar>& wx = p[name + ".wx"];
  const Var<Scalar>& wh = p[name + ".wh"];
  const Index hidden = wh.rows();
  if (x.cols() != wx.rows() || state.h.cols() != hidden || state.c.cols() != hidden || state.h.rows() != x.rows() ||
      state.c.rows() != x.rows()) {
    throw ContractError("lstm_cell '" + name + "': input " + shape_string(x.shape()) + ", h " +
                        shape_string(state.h.shape()) + ", c " + shape_string(state.c.shape()) +
                        " do not fit weights " + shape_string(wx.shape()) + " / " + shape_string(wh.shape()));
  }
  const Var<Scalar> gates = add_bias(matmul(x, wx) + matmul(state.h, wh), p[name + ".b"]);
  const Var<Scalar> i = sigmoid(slice_cols(gates, 0, hidden));
  const Var<Scalar> f = sigmoid(slice_cols(gates, hidden, hidden));
  const Var<Scalar> o = sigmoid(slice_cols(gates, 2 * hidden, hidden));
  const Var<Scalar> g = tanh(slice_cols(gates, 3 * hidden, hidden));
  const Var<Scalar> c = mul(f, state.c) + mul(i, g);
  return {mul(o, tanh(c)), c};
}

template <typename Scalar>
Var<Scalar> gat_layer(const Binding<Scalar>& p, const std::string& name, const Var<Scalar>& x, Index heads,
                      const Var<Scalar>& mask) {
  const Var<Scalar>& a_src = p[name + ".a_src"];
  const Var<Scalar>& a_dst = p[name + ".a_dst"];
  const Index head_dim = a_src.rows();
  const Var<Scalar> wh = matmul(x, p[name + ".w"]);
  std::vector<Var<Scalar>> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (Index h = 0; h < heads; ++h) {
    const Var<Scalar> feat = heads == 1 ? wh : slice_cols(wh, h * head_dim, head_dim);
    const Var<Scalar> s = matmul(feat, heads == 1 ? a_src : slice_cols(a_src, h, 1));
    const Var<Scalar> d = matmul(feat, heads == 1 ? a_dst : slice_cols(a_dst, h, 1));
    Var<Scalar> scores = leaky_relu(outer_sum(s, d), Scalar(0.2));
    if (mask.valid()) scores = scores + mask;
    outs.push_back(matmul(softmax_rows(scores), feat));
  }
  const Var<Scalar> joined = heads == 1 ? outs.front() : concat_cols<Scalar>(outs);
  return tanh(add_bias(joined, p[name + ".b"]));
}

Matrix<double> adjacency_from_positions(const Matrix<double>& positions) {
  const Index n = positions.rows();
  Matrix<double> a = Matrix<double>::Identity(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double dist = (positions.row(i) - positions.row(j)).norm();
      const double w = dist > 0.0 ? 1.0 / dist : 0.0;
      a(i, j) = w;
      a(j, i) = w;
    }
  }
  const Eigen::VectorXd inv_sqrt = a.rowwise().sum().array().rsqrt();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) *= inv_sqrt(i) * inv_sqrt(j);
  return a;
}

#define CTP_INSTANTIATE_LAYERS(S)                                                                               \
  template void add_linear<S>(ParameterStore<S>&, const std::string&, Index, Index, Rng&);                      \
  template void add_lstm<S>(ParameterStore<S>&, const std::string&, Index, Index, Rng&);                        \
  template void add_gat<S>(ParameterStore<S>&, const std::string&, Index, Index, Index, Rng&);                  \
  template void add_conv<S>(ParameterStore<S>&, const std::string&, Index, Index, Index, Rng&);                 \
  template Var<S> linear<S>(const Binding<S>&, const std::string&, const Var<S>&);                              \
  template LstmState<S> lstm_cell<S>(const Binding<S>&, const std::string&, const Var<S>&, const LstmState<S>&); \
  template Var<S> gat_layer<S>(const Binding<S>&, const std::string&, const Var<S>&, Index, const Var<S>&);

CTP_INSTANTIATE_LAYERS(float)
CTP_INSTANTIATE_LAYERS(double)

}  // namespace ctp
