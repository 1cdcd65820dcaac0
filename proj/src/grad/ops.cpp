#include "ctp/grad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ctp {
namespace {

template <typename Scalar>
using Mat = Matrix<Scalar>;

template <typename Scalar>
using StridedMap = Eigen::Map<Mat<Scalar>, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

template <typename Scalar>
using ConstStridedMap = Eigen::Map<const Mat<Scalar>, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

template <typename Scalar>
Tape<Scalar>& common_tape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands live on different tapes");
  return a.tape();
}

template <typename Scalar>
void require_same_shape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename Scalar>
Shape matrix_shape(const Mat<Scalar>& m) {
  return Shape{m.rows(), m.cols()};
}

constexpr double kLogFloor = 1e-12;

}  // namespace

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = common_tape("matmul", a, b);
  if (a.shape().size() > 2 || b.shape().size() > 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  Mat<Scalar> out = a.value() * b.value();
  Shape shape = matrix_shape<Scalar>(out);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("matmul", std::move(shape), std::move(out), {ia, ib},
                     [ia, ib](Tape<Scalar>& t, const Mat<Scalar>& g) {
                       if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
                       if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
                     });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = common_tape("add", a, b);
  require_same_shape("add", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("add", a.shape(), a.value() + b.value(), {ia, ib},
                     [ia, ib](Tape<Scalar>& t, const Mat<Scalar>& g) {
                       t.accumulate(ia, g);
                       t.accumulate(ib, g);
                     });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = common_tape("sub", a, b);
  require_same_shape("sub", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("sub", a.shape(), a.value() - b.value(), {ia, ib},
                     [ia, ib](Tape<Scalar>& t, const Mat<Scalar>& g) {
                       t.accumulate(ia, g);
                       t.accumulate(ib, -g);
                     });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = common_tape("mul", a, b);
  require_same_shape("mul", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("mul", a.shape(), a.value().cwiseProduct(b.value()), {ia, ib},
                     [ia, ib](Tape<Scalar>& t, const Mat<Scalar>& g) {
                       if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                       if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                     });
}

template <typename Scalar>
Var<Scalar> div(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = common_tape("div", a, b);
  require_same_shape("div", a, b);
  if ((b.value().array() == Scalar(0)).any()) throw NumericError("div: division by zero");
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("div", a.shape(), a.value().cwiseQuotient(b.value()), {ia, ib},
                     [ia, ib](Tape<Scalar>& t, const Mat<Scalar>& g) {
                       const auto& av = t.value(ia);
                       const auto& bv = t.value(ib);
                       if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseQuotient(bv));
                       if (t.requires_grad(ib)) {
                         t.accumulate(ib, (-g.array() * av.array() / bv.array().square()).matrix());
                       }
                     });
}

template <typename Scalar>
Var<Scalar> add_bias(const Var<Scalar>& a, const Var<Scalar>& bias) {
  auto& tape = common_tape("add_bias", a, bias);
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(a.shape()));
  }
  Mat<Scalar> out = a.value().rowwise() + bias.value().row(0);
  const std::size_t ia = a.id(), ib = bias.id();
  return tape.record("add_bias", a.shape(), std::move(out), {ia, ib},
                     [ia, ib](Tape<Scalar>& t, const Mat<Scalar>& g) {
                       t.accumulate(ia, g);
                       if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
                     });
}

template <typename Scalar>
Var<Scalar> broadcast_rows(const Var<Scalar>& row, Index rows) {
  if (row.rows() != 1) throw DimensionError("broadcast_rows: expected a single row, got " + shape_string(row.shape()));
  Mat<Scalar> out = row.value().replicate(rows, 1);
  Shape shape{rows, row.cols()};
  const std::size_t ir = row.id();
  return row.tape().record("broadcast_rows", std::move(shape), std::move(out), {ir},
                           [ir](Tape<Scalar>& t, const Mat<Scalar>& g) { t.accumulate(ir, g.colwise().sum()); });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor) {
  const std::size_t ia = a.id();
  return a.tape().record("scale", a.shape(), a.value() * factor, {ia},
                         [ia, factor](Tape<Scalar>& t, const Mat<Scalar>& g) { t.accumulate(ia, g * factor); });
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar offset) {
  const std::size_t ia = a.id();
  Mat<Scalar> out = a.value().array() + offset;
  return a.tape().record("add_scalar", a.shape(), std::move(out), {ia},
                         [ia](Tape<Scalar>& t, const Mat<Scalar>& g) { t.accumulate(ia, g); });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  const std::size_t ix = x.id();
  auto& tape = x.tape();
  const std::size_t io = tape.size();
  Mat<Scalar> out = x.value().array().tanh();
  return tape.record("tanh", x.shape(), std::move(out), {ix}, [ix, io](Tape<Scalar>& t, const Mat<Scalar>& g) {
    const auto& yv = t.value(io);
    t.accumulate(ix, (g.array() * (Scalar(1) - yv.array().square())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  const std::size_t ix = x.id();
  auto& tape = x.tape();
  const std::size_t io = tape.size();
  Mat<Scalar> out = (Scalar(1) + (-x.value().array()).exp()).inverse();
  return tape.record("sigmoid", x.shape(), std::move(out), {ix}, [ix, io](Tape<Scalar>& t, const Mat<Scalar>& g) {
    const auto& yv = t.value(io);
    t.accumulate(ix, (g.array() * yv.array() * (Scalar(1) - yv.array())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  const std::size_t ix = x.id();
  Mat<Scalar> out = x.value().cwiseMax(Scalar(0));
  return x.tape().record("relu", x.shape(), std::move(out), {ix}, [ix](Tape<Scalar>& t, const Mat<Scalar>& g) {
    const auto& xv = t.value(ix);
    t.accumulate(ix, (xv.array() > Scalar(0)).select(g, Mat<Scalar>::Zero(g.rows(), g.cols())));
  });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& x) {
  const std::size_t ix = x.id();
  auto& tape = x.tape();
  const std::size_t io = tape.size();
  Mat<Scalar> out = x.value().array().exp();
  return tape.record("exp", x.shape(), std::move(out), {ix}, [ix, io](Tape<Scalar>& t, const Mat<Scalar>& g) {
    t.accumulate(ix, g.cwiseProduct(t.value(io)));
  });
}

template <typename Scalar>
Var<Scalar> log(const Var<Scalar>& x) {
  if ((x.value().array() <= Scalar(0)).any()) throw NumericError("log: input outside domain (non-positive entry)");
  const std::size_t ix = x.id();
  Mat<Scalar> out = x.value().array().log();
  return x.tape().record("log", x.shape(), std::move(out), {ix}, [ix](Tape<Scalar>& t, const Mat<Scalar>& g) {
    t.accumulate(ix, g.cwiseQuotient(t.value(ix)));
  });
}

template <typename Scalar>
Var<Scalar> safe_log(const Var<Scalar>& x) {
  const std::size_t ix = x.id();
  const Scalar floor = static_cast<Scalar>(kLogFloor);
  Mat<Scalar> out = x.value().cwiseMax(floor).array().log();
  return x.tape().record("safe_log", x.shape(), std::move(out), {ix},
                         [ix, floor](Tape<Scalar>& t, const Mat<Scalar>& g) {
                           const auto& xv = t.value(ix);
                           t.accumulate(ix, (xv.array() > floor)
                                                .select(g.array() / xv.array().max(floor), Scalar(0))
                                                .matrix());
                         });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope) {
  const std::size_t ix = x.id();
  Mat<Scalar> out = (x.value().array() > Scalar(0)).select(x.value(), x.value() * slope);
  return x.tape().record("leaky_relu", x.shape(), std::move(out), {ix},
                         [ix, slope](Tape<Scalar>& t, const Mat<Scalar>& g) {
                           const auto& xv = t.value(ix);
                           t.accumulate(ix, (xv.array() > Scalar(0)).select(g, g * slope));
                         });
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& x) {
  const std::size_t ix = x.id();
  Mat<Scalar> out = x.value().array().square();
  return x.tape().record("square", x.shape(), std::move(out), {ix}, [ix](Tape<Scalar>& t, const Mat<Scalar>& g) {
    t.accumulate(ix, (Scalar(2) * g.array() * t.value(ix).array()).matrix());
  });
}

template <typename Scalar>
Var<Scalar> elementwise_map(const Var<Scalar>& x, MapFn fn) {
  switch (fn) {
    case MapFn::tanh:
      return tanh(x);
    case MapFn::sigmoid:
      return sigmoid(x);
    case MapFn::relu:
      return relu(x);
    case MapFn::exp:
      return exp(x);
    case MapFn::log:
      return log(x);
  }
  throw ContractError("elementwise_map: unknown function");
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  const std::size_t ix = x.id();
  Mat<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape().record("sum", Shape{}, std::move(out), {ix}, [ix](Tape<Scalar>& t, const Mat<Scalar>& g) {
    const auto& xv = t.value(ix);
    t.accumulate(ix, Mat<Scalar>::Constant(xv.rows(), xv.cols(), g(0, 0)));
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  const Index n = x.value().size();
  if (n == 0) throw ContractError("mean: empty input");
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(n));
}

template <typename Scalar>
Var<Scalar> minimum(std::span<const Var<Scalar>> xs) {
  if (xs.empty()) throw ContractError("minimum: no operands");
  std::vector<std::size_t> ids;
  std::size_t best = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].value().size() != 1) throw ContractError("minimum: operands must be scalars");
    if (&xs[i].tape() != &xs[0].tape()) throw ContractError("minimum: operands live on different tapes");
    ids.push_back(xs[i].id());
    if (xs[i].item() < xs[best].item()) best = i;
  }
  const std::size_t winner = xs[best].id();
  Mat<Scalar> out = xs[best].value();
  return xs[0].tape().record("minimum", Shape{}, std::move(out), std::move(ids),
                             [winner](Tape<Scalar>& t, const Mat<Scalar>& g) { t.accumulate(winner, g); });
}

template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  const Index rows = parts[0].rows();
  Index cols = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row count mismatch " + shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    }
    if (&p.tape() != &parts[0].tape()) throw ContractError("concat_cols: operands live on different tapes");
    cols += p.cols();
    ids.push_back(p.id());
  }
  Mat<Scalar> out(rows, cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  auto ids_copy = ids;
  return parts[0].tape().record("concat_cols", Shape{rows, cols}, std::move(out), std::move(ids),
                                [ids_copy, offsets](Tape<Scalar>& t, const Mat<Scalar>& g) {
                                  for (std::size_t i = 0; i < ids_copy.size(); ++i) {
                                    if (!t.requires_grad(ids_copy[i])) continue;
                                    const Index w = t.value(ids_copy[i]).cols();
                                    t.accumulate(ids_copy[i], g.middleCols(offsets[i], w));
                                  }
                                });
}

template <typename Scalar>
Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  const Index cols = parts[0].cols();
  Index rows = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column count mismatch " + shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    }
    if (&p.tape() != &parts[0].tape()) throw ContractError("concat_rows: operands live on different tapes");
    rows += p.rows();
    ids.push_back(p.id());
  }
  Mat<Scalar> out(rows, cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  auto ids_copy = ids;
  return parts[0].tape().record("concat_rows", Shape{rows, cols}, std::move(out), std::move(ids),
                                [ids_copy, offsets](Tape<Scalar>& t, const Mat<Scalar>& g) {
                                  for (std::size_t i = 0; i < ids_copy.size(); ++i) {
                                    if (!t.requires_grad(ids_copy[i])) continue;
                                    const Index h = t.value(ids_copy[i]).rows();
                                    t.accumulate(ids_copy[i], g.middleRows(offsets[i], h));
                                  }
                                });
}

template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) +
                         ") out of range for " + shape_string(x.shape()));
  }
  const std::size_t ix = x.id();
  Mat<Scalar> out = x.value().middleCols(start, count);
  Shape shape{x.rows(), count};
  return x.tape().record("slice_cols", std::move(shape), std::move(out), {ix},
                         [ix, start, count](Tape<Scalar>& t, const Mat<Scalar>& g) {
                           const auto& xv = t.value(ix);
                           Mat<Scalar> full = Mat<Scalar>::Zero(xv.rows(), xv.cols());
                           full.middleCols(start, count) = g;
                           t.accumulate(ix, full);
                         });
}

template <typename Scalar>
Var<Scalar> slice_rows(const Var<Scalar>& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) +
                         ") out of range for " + shape_string(x.shape()));
  }
  const std::size_t ix = x.id();
  Mat<Scalar> out = x.value().middleRows(start, count);
  Shape shape{count, x.cols()};
  return x.tape().record("slice_rows", std::move(shape), std::move(out), {ix},
                         [ix, start, count](Tape<Scalar>& t, const Mat<Scalar>& g) {
                           const auto& xv = t.value(ix);
                           Mat<Scalar> full = Mat<Scalar>::Zero(xv.rows(), xv.cols());
                           full.middleRows(start, count) = g;
                           t.accumulate(ix, full);
                         });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape) {
  if (shape_size(shape) != x.value().size()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  auto [r, c] = storage_dims(shape);
  Mat<Scalar> out = Eigen::Map<const Mat<Scalar>>(x.value().data(), r, c);
  const std::size_t ix = x.id();
  return x.tape().record("reshape", std::move(shape), std::move(out), {ix},
                         [ix](Tape<Scalar>& t, const Mat<Scalar>& g) {
                           const auto& xv = t.value(ix);
                           t.accumulate(ix, Eigen::Map<const Mat<Scalar>>(g.data(), xv.rows(), xv.cols()));
                         });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& x) {
  if (x.shape().size() > 2) throw DimensionError("transpose: expected rank <= 2, got " + shape_string(x.shape()));
  const std::size_t ix = x.id();
  Mat<Scalar> out = x.value().transpose();
  Shape shape{out.rows(), out.cols()};
  return x.tape().record("transpose", std::move(shape), std::move(out), {ix},
                         [ix](Tape<Scalar>& t, const Mat<Scalar>& g) { t.accumulate(ix, g.transpose()); });
}

template <typename Scalar>
Var<Scalar> outer_sum(const Var<Scalar>& s, const Var<Scalar>& d) {
  auto& tape = common_tape("outer_sum", s, d);
  if (s.cols() != 1 || d.cols() != 1) {
    throw DimensionError("outer_sum: expected column vectors, got " + shape_string(s.shape()) + " and " +
                         shape_string(d.shape()));
  }
  Mat<Scalar> out = s.value().replicate(1, d.rows()) + d.value().transpose().replicate(s.rows(), 1);
  Shape shape{out.rows(), out.cols()};
  const std::size_t is = s.id(), id = d.id();
  return tape.record("outer_sum", std::move(shape), std::move(out), {is, id},
                     [is, id](Tape<Scalar>& t, const Mat<Scalar>& g) {
                       if (t.requires_grad(is)) t.accumulate(is, g.rowwise().sum());
                       if (t.requires_grad(id)) t.accumulate(id, g.colwise().sum().transpose());
                     });
}

template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& x) {
  const auto& xv = x.value();
  Mat<Scalar> out = (xv.colwise() - xv.rowwise().maxCoeff()).array().exp();
  out = out.array().colwise() / out.rowwise().sum().array();
  auto& tape = x.tape();
  const std::size_t ix = x.id(), io = tape.size();
  return tape.record("softmax_rows", x.shape(), std::move(out), {ix}, [ix, io](Tape<Scalar>& t, const Mat<Scalar>& g) {
    const auto& y = t.value(io);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
    t.accumulate(ix, (y.array() * (g.colwise() - dot).array()).matrix());
  });
}

namespace {

struct ConvGeometry {
  Index batch, c_in, t_in, c_out, k, pad, t_out;
};

template <typename Scalar>
ConvGeometry conv_geometry(const Var<Scalar>& x, const Var<Scalar>& kernel, Index pad) {
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  if (ks.size() != 3) throw DimensionError("temporal_conv: kernel must be {C_out, C_in, k}, got " + shape_string(ks));
  ConvGeometry g{};
  if (xs.size() == 2) {
    g.batch = 1;
    g.c_in = xs[0];
    g.t_in = xs[1];
  } else if (xs.size() == 3) {
    g.batch = xs[0];
    g.c_in = xs[1];
    g.t_in = xs[2];
  } else {
    throw DimensionError("temporal_conv: input must be {C_in, T} or {B, C_in, T}, got " + shape_string(xs));
  }
  if (ks[1] != g.c_in) {
    throw DimensionError("temporal_conv: kernel " + shape_string(ks) + " expects " + std::to_string(ks[1]) +
                         " input channels, input " + shape_string(xs) + " has " + std::to_string(g.c_in));
  }
  if (pad < 0) throw DimensionError("temporal_conv: negative padding");
  g.c_out = ks[0];
  g.k = ks[2];
  g.pad = pad;
  if (g.k > g.t_in + 2 * pad) {
    throw DimensionError("temporal_conv: kernel length " + std::to_string(g.k) + " exceeds padded signal length " +
                         std::to_string(g.t_in + 2 * pad));
  }
  g.t_out = g.t_in + 2 * pad - g.k + 1;
  return g;
}

// Patch matrix P(ci*k + j, t) = x(ci, t + j - pad), zero outside the signal.
template <typename Scalar, typename XMap>
Mat<Scalar> im2col(const XMap& x, const ConvGeometry& g) {
  Mat<Scalar> p = Mat<Scalar>::Zero(g.c_in * g.k, g.t_out);
  for (Index ci = 0; ci < g.c_in; ++ci) {
    for (Index j = 0; j < g.k; ++j) {
      const Index shift = j - g.pad;
      const Index t0 = std::max<Index>(0, -shift);
      const Index t1 = std::min<Index>(g.t_out, g.t_in - shift);
      if (t1 > t0) p.row(ci * g.k + j).segment(t0, t1 - t0) = x.row(ci).segment(t0 + shift, t1 - t0);
    }
  }
  return p;
}

template <typename Scalar, typename XMap>
void col2im_add(const Mat<Scalar>& gp, const ConvGeometry& g, XMap& gx) {
  for (Index ci = 0; ci < g.c_in; ++ci) {
    for (Index j = 0; j < g.k; ++j) {
      const Index shift = j - g.pad;
      const Index t0 = std::max<Index>(0, -shift);
      const Index t1 = std::min<Index>(g.t_out, g.t_in - shift);
      if (t1 > t0) gx.row(ci).segment(t0 + shift, t1 - t0) += gp.row(ci * g.k + j).segment(t0, t1 - t0);
    }
  }
}

template <typename Scalar>
Var<Scalar> temporal_conv_impl(const Var<Scalar>& x, const Var<Scalar>& kernel, const Var<Scalar>* bias, Index pad) {
  auto& tape = common_tape("temporal_conv", x, kernel);
  const ConvGeometry g = conv_geometry(x, kernel, pad);
  if (bias && (bias->value().size() != g.c_out || bias->rows() != 1)) {
    throw DimensionError("temporal_conv: bias " + shape_string(bias->shape()) + " does not match " +
                         std::to_string(g.c_out) + " output channels");
  }
  const Mat<Scalar>& kv = kernel.value();  // C_out x (C_in*k)
  Shape shape = x.shape().size() == 2 ? Shape{g.c_out, g.t_out} : Shape{g.batch, g.c_out, g.t_out};
  auto [out_rows, out_cols] = storage_dims(shape);
  Mat<Scalar> out(out_rows, out_cols);
  for (Index b = 0; b < g.batch; ++b) {
    Eigen::Map<const Mat<Scalar>> xb(x.value().data() + b * g.c_in * g.t_in, g.c_in, g.t_in);
    Eigen::Map<Mat<Scalar>> ob(out.data() + b * g.c_out * g.t_out, g.c_out, g.t_out);
    ob.noalias() = kv * im2col<Scalar>(xb, g);
    if (bias) ob.colwise() += bias->value().row(0).transpose();
  }
  std::vector<std::size_t> inputs{x.id(), kernel.id()};
  const std::size_t ix = x.id(), ik = kernel.id();
  const std::size_t ib = bias ? bias->id() : 0;
  const bool has_bias = bias != nullptr;
  if (has_bias) inputs.push_back(ib);
  return tape.record("temporal_conv", std::move(shape), std::move(out), std::move(inputs),
                     [ix, ik, ib, has_bias, g](Tape<Scalar>& t, const Mat<Scalar>& grad) {
                       const auto& xv = t.value(ix);
                       const auto& kv = t.value(ik);
                       const bool gx_needed = t.requires_grad(ix);
                       const bool gk_needed = t.requires_grad(ik);
                       const bool gb_needed = has_bias && t.requires_grad(ib);
                       Mat<Scalar> gx = gx_needed ? Mat<Scalar>::Zero(xv.rows(), xv.cols()) : Mat<Scalar>();
                       Mat<Scalar> gk = gk_needed ? Mat<Scalar>::Zero(kv.rows(), kv.cols()) : Mat<Scalar>();
                       Mat<Scalar> gb = gb_needed ? Mat<Scalar>::Zero(1, g.c_out) : Mat<Scalar>();
                       for (Index b = 0; b < g.batch; ++b) {
                         Eigen::Map<const Mat<Scalar>> gob(grad.data() + b * g.c_out * g.t_out, g.c_out, g.t_out);
                         if (gk_needed) {
                           Eigen::Map<const Mat<Scalar>> xb(xv.data() + b * g.c_in * g.t_in, g.c_in, g.t_in);
                           gk.noalias() += gob * im2col<Scalar>(xb, g).transpose();
                         }
                         if (gx_needed) {
                           Mat<Scalar> gp = kv.transpose() * gob;
                           Eigen::Map<Mat<Scalar>> gxb(gx.data() + b * g.c_in * g.t_in, g.c_in, g.t_in);
                           col2im_add<Scalar>(gp, g, gxb);
                         }
                         if (gb_needed) gb.row(0) += gob.rowwise().sum().transpose();
                       }
                       if (gx_needed) t.accumulate(ix, gx);
                       if (gk_needed) t.accumulate(ik, gk);
                       if (gb_needed) t.accumulate(ib, gb);
                     });
}

}  // namespace

template <typename Scalar>
Var<Scalar> temporal_conv(const Var<Scalar>& x, const Var<Scalar>& kernel, Index pad) {
  return temporal_conv_impl<Scalar>(x, kernel, nullptr, pad);
}

template <typename Scalar>
Var<Scalar> temporal_conv(const Var<Scalar>& x, const Var<Scalar>& kernel, const Var<Scalar>& bias, Index pad) {
  return temporal_conv_impl<Scalar>(x, kernel, &bias, pad);
}

template <typename Scalar>
Var<Scalar> graph_conv(const Var<Scalar>& x, const std::vector<Matrix<Scalar>>& adjacency) {
  const Shape& xs = x.shape();
  if (xs.size() != 3) throw DimensionError("graph_conv: input must be {N, C, T}, got " + shape_string(xs));
  const Index n = xs[0], c = xs[1], steps = xs[2];
  if (static_cast<Index>(adjacency.size()) != steps) {
    throw DimensionError("graph_conv: " + std::to_string(adjacency.size()) + " adjacency matrices for " +
                         std::to_string(steps) + " time steps");
  }
  for (const auto& a : adjacency) {
    if (a.rows() != n || a.cols() != n) {
      throw DimensionError("graph_conv: adjacency " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                           " does not match " + std::to_string(n) + " nodes");
    }
  }
  const Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic> stride(c * steps, steps);
  Mat<Scalar> out(n, c * steps);
  for (Index t = 0; t < steps; ++t) {
    ConstStridedMap<Scalar> xt(x.value().data() + t, n, c, stride);
    StridedMap<Scalar> ot(out.data() + t, n, c, stride);
    ot = adjacency[t] * xt;
  }
  const std::size_t ix = x.id();
  return x.tape().record("graph_conv", xs, std::move(out), {ix},
                         [ix, adjacency, n, c, steps](Tape<Scalar>& t, const Mat<Scalar>& g) {
                           const Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic> s(c * steps, steps);
                           Mat<Scalar> gx(n, c * steps);
                           for (Index k = 0; k < steps; ++k) {
                             ConstStridedMap<Scalar> gt(g.data() + k, n, c, s);
                             StridedMap<Scalar> gxt(gx.data() + k, n, c, s);
                             gxt = adjacency[k].transpose() * gt;
                           }
                           t.accumulate(ix, gx);
                         });
}

template <typename Scalar>
Var<Scalar> swap_last_axes(const Var<Scalar>& x) {
  const Shape& xs = x.shape();
  if (xs.size() != 3) throw DimensionError("swap_last_axes: input must be rank 3, got " + shape_string(xs));
  const Index b = xs[0], c = xs[1], steps = xs[2];
  Mat<Scalar> out(b, c * steps);
  for (Index r = 0; r < b; ++r) {
    Eigen::Map<const Mat<Scalar>> in(x.value().row(r).data(), c, steps);
    Eigen::Map<Mat<Scalar>>(out.row(r).data(), steps, c) = in.transpose();
  }
  const std::size_t ix = x.id();
  return x.tape().record("swap_last_axes", Shape{b, steps, c}, std::move(out), {ix},
                         [ix, b, c, steps](Tape<Scalar>& t, const Mat<Scalar>& g) {
                           Mat<Scalar> gx(b, c * steps);
                           for (Index r = 0; r < b; ++r) {
                             Eigen::Map<const Mat<Scalar>> gr(g.row(r).data(), steps, c);
                             Eigen::Map<Mat<Scalar>>(gx.row(r).data(), c, steps) = gr.transpose();
                           }
                           t.accumulate(ix, gx);
                         });
}

#define CTP_INSTANTIATE_OPS(S)                                                                        \
  template Var<S> matmul(const Var<S>&, const Var<S>&);                                               \
  template Var<S> add(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> div(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> add_bias(const Var<S>&, const Var<S>&);                                             \
  template Var<S> broadcast_rows(const Var<S>&, Index);                                               \
  template Var<S> scale(const Var<S>&, S);                                                            \
  template Var<S> add_scalar(const Var<S>&, S);                                                       \
  template Var<S> elementwise_map(const Var<S>&, MapFn);                                              \
  template Var<S> tanh(const Var<S>&);                                                                \
  template Var<S> sigmoid(const Var<S>&);                                                             \
  template Var<S> relu(const Var<S>&);                                                                \
  template Var<S> exp(const Var<S>&);                                                                 \
  template Var<S> log(const Var<S>&);                                                                 \
  template Var<S> safe_log(const Var<S>&);                                                            \
  template Var<S> leaky_relu(const Var<S>&, S);                                                       \
  template Var<S> square(const Var<S>&);                                                              \
  template Var<S> sum(const Var<S>&);                                                                 \
  template Var<S> mean(const Var<S>&);                                                                \
  template Var<S> minimum(std::span<const Var<S>>);                                                   \
  template Var<S> concat_cols(std::span<const Var<S>>);                                               \
  template Var<S> concat_rows(std::span<const Var<S>>);                                               \
  template Var<S> slice_cols(const Var<S>&, Index, Index);                                            \
  template Var<S> slice_rows(const Var<S>&, Index, Index);                                            \
  template Var<S> reshape(const Var<S>&, Shape);                                                      \
  template Var<S> transpose(const Var<S>&);                                                           \
  template Var<S> outer_sum(const Var<S>&, const Var<S>&);                                            \
  template Var<S> softmax_rows(const Var<S>&);                                                        \
  template Var<S> temporal_conv(const Var<S>&, const Var<S>&, Index);                                 \
  template Var<S> temporal_conv(const Var<S>&, const Var<S>&, const Var<S>&, Index);                  \
  template Var<S> graph_conv(const Var<S>&, const std::vector<Matrix<S>>&);                           \
  template Var<S> swap_last_axes(const Var<S>&);

CTP_INSTANTIATE_OPS(float)
CTP_INSTANTIATE_OPS(double)

#undef CTP_INSTANTIATE_OPS

}  // namespace ctp
