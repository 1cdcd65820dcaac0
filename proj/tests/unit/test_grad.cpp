#include "doctest.h"

#include <cmath>

#include "ctp/grad/adam.hpp"
#include "ctp/grad/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/primitive_catalog.hpp"

using namespace ctp;
using ctp::testing::gradcheck;
using ctp::testing::random_matrix;
using M = Matrix<double>;

namespace {

M mat(std::initializer_list<std::initializer_list<double>> rows) {
  M m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

M triple_loop_matmul(const M& a, const M& b) {
  M c = M::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j)
      for (Index k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

// Plain sliding-window sum over a zero-padded signal.
M brute_conv(const M& x, const M& kernel_flat, Index c_out, Index k, Index pad) {
  const Index c_in = x.rows(), t_in = x.cols();
  const Index t_out = t_in + 2 * pad - k + 1;
  M out = M::Zero(c_out, t_out);
  for (Index co = 0; co < c_out; ++co)
    for (Index t = 0; t < t_out; ++t)
      for (Index ci = 0; ci < c_in; ++ci)
        for (Index j = 0; j < k; ++j) {
          const Index src = t + j - pad;
          if (src >= 0 && src < t_in) out(co, t) += kernel_flat(co, ci * k + j) * x(ci, src);
        }
  return out;
}

double series_exp(double x) {
  double term = 1.0, total = 1.0;
  for (int n = 1; n < 40; ++n) {
    term *= x / n;
    total += term;
  }
  return total;
}

}  // namespace

TEST_CASE("matmul matches identity, hand and annihilator cases") {
  Tape<double> tape;
  auto b = tape.constant(mat({{5}, {6}}));
  CHECK(matmul(tape.constant(M::Identity(2, 2)), b).value() == mat({{5}, {6}}));

  const M a = mat({{1, 2}, {3, 4}});
  const M expected = triple_loop_matmul(a, mat({{5}, {6}}));
  CHECK(expected == mat({{17}, {39}}));
  CHECK(matmul(tape.constant(a), b).value() == expected);

  CHECK(matmul(tape.constant(M::Zero(3, 2)), b).value().isZero(0.0));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape<double> tape;
  auto a = tape.constant(M::Zero(2, 3));
  auto b = tape.constant(M::Zero(2, 1));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x1]") != std::string::npos);
  }
}

TEST_CASE("matmul agrees with a triple loop on random operands") {
  Rng rng(3);
  Tape<double> tape;
  for (int trial = 0; trial < 10; ++trial) {
    const Index m = 1 + rng.below(5), k = 1 + rng.below(5), n = 1 + rng.below(5);
    M a = random_matrix(rng, m, k), b = random_matrix(rng, k, n);
    CHECK((matmul(tape.constant(a), tape.constant(b)).value() - triple_loop_matmul(a, b)).cwiseAbs().maxCoeff() <
          1e-14);
  }
}

TEST_CASE("elementwise maps at reference points") {
  Tape<double> tape;
  auto scalar = [&](double v) { return tape.constant(M::Constant(1, 1, v)); };
  CHECK(elementwise_map(scalar(-1.0), MapFn::relu).item() == 0.0);
  CHECK(elementwise_map(scalar(0.0), MapFn::sigmoid).item() == 0.5);
  const double e2 = series_exp(2.0);
  CHECK(elementwise_map(scalar(1.0), MapFn::tanh).item() == doctest::Approx((e2 - 1.0) / (e2 + 1.0)).epsilon(1e-14));
  CHECK(elementwise_map(scalar(1.0), MapFn::tanh).item() == doctest::Approx(0.761594).epsilon(1e-6));
  CHECK(elementwise_map(scalar(1.0), MapFn::exp).item() == doctest::Approx(series_exp(1.0)).epsilon(1e-14));
  CHECK(elementwise_map(scalar(1.0), MapFn::log).item() == 0.0);
}

TEST_CASE("log outside its domain raises a numeric-domain error") {
  Tape<double> tape;
  CHECK_THROWS_AS(elementwise_map(tape.constant(mat({{1.0, 0.0}})), MapFn::log), NumericError);
  CHECK_THROWS_AS(log(tape.constant(mat({{-2.0}}))), NumericError);
}

TEST_CASE("safe_log clamps at 1e-12") {
  Tape<double> tape;
  CHECK(safe_log(tape.constant(mat({{0.0}}))).item() == doctest::Approx(std::log(1e-12)));
}

TEST_CASE("non-finite outputs abort with the producing primitive named") {
  Tape<double> tape;
  try {
    exp(tape.constant(mat({{1000.0}})));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("'exp'") != std::string::npos);
  }
}

TEST_CASE("softmax is stable for large logits") {
  Tape<double> tape;
  auto y = softmax_rows(tape.constant(mat({{1000.0, 1000.0}, {0.0, std::log(3.0)}})));
  CHECK(y.value()(0, 0) == doctest::Approx(0.5));
  CHECK(y.value()(1, 1) == doctest::Approx(0.75));
}

TEST_CASE("temporal_conv identity, constancy and brute-force cases") {
  Tape<double> tape;
  Rng rng(11);

  SUBCASE("delta kernel preserves the signal") {
    M x = random_matrix(rng, 2, 7);
    M kernel = M::Zero(2, 2 * 3);  // {2, 2, 3}
    kernel(0, 0 * 3 + 1) = 1.0;
    kernel(1, 1 * 3 + 1) = 1.0;
    auto out = temporal_conv(tape.constant({2, 7}, x), tape.constant({2, 2, 3}, kernel), 1);
    CHECK(out.shape() == Shape{2, 7});
    CHECK(out.value() == x);
  }

  SUBCASE("averaging kernel keeps a constant signal constant") {
    M x = M::Constant(1, 9, 2.5);
    M kernel = M::Constant(1, 4, 0.25);
    auto out = temporal_conv(tape.constant({1, 9}, x), tape.constant({1, 1, 4}, kernel), 0);
    CHECK(out.shape() == Shape{1, 6});
    CHECK((out.value().array() - 2.5).abs().maxCoeff() < 1e-15);
  }

  SUBCASE("random 2x7 input with a 3-tap kernel matches the sliding-window oracle") {
    for (Index pad : {0, 1, 2}) {
      M x = random_matrix(rng, 2, 7);
      M kernel = random_matrix(rng, 3, 2 * 3);
      auto out = temporal_conv(tape.constant({2, 7}, x), tape.constant({3, 2, 3}, kernel), pad);
      CHECK((out.value() - brute_conv(x, kernel, 3, 3, pad)).cwiseAbs().maxCoeff() < 1e-14);
    }
  }

  SUBCASE("batched input convolves each row independently") {
    M x = random_matrix(rng, 3, 2 * 5);
    M kernel = random_matrix(rng, 4, 2 * 3);
    auto out = temporal_conv(tape.constant({3, 2, 5}, x), tape.constant({4, 2, 3}, kernel), 1);
    CHECK(out.shape() == Shape{3, 4, 5});
    for (Index b = 0; b < 3; ++b) {
      M xb = Eigen::Map<const M>(x.row(b).data(), 2, 5);
      M ob = Eigen::Map<const M>(out.value().row(b).data(), 4, 5);
      CHECK((ob - brute_conv(xb, kernel, 4, 3, 1)).cwiseAbs().maxCoeff() < 1e-14);
    }
  }

  SUBCASE("kernel longer than the padded signal is rejected") {
    CHECK_THROWS_AS(temporal_conv(tape.constant({1, 3}, M::Zero(1, 3)), tape.constant({1, 1, 6}, M::Zero(1, 6)), 1),
                    DimensionError);
  }
}

TEST_CASE("graph_conv mixes nodes per frame") {
  Rng rng(5);
  Tape<double> tape;
  const Index n = 3, c = 2, t = 4;
  M x = random_matrix(rng, n, c * t);
  std::vector<M> adj;
  for (Index k = 0; k < t; ++k) adj.push_back(random_matrix(rng, n, n));
  auto out = graph_conv(tape.constant({n, c, t}, x), adj);
  for (Index i = 0; i < n; ++i)
    for (Index ch = 0; ch < c; ++ch)
      for (Index k = 0; k < t; ++k) {
        double expected = 0.0;
        for (Index j = 0; j < n; ++j) expected += adj[k](i, j) * x(j, ch * t + k);
        CHECK(out.value()(i, ch * t + k) == doctest::Approx(expected).epsilon(1e-13));
      }
}

TEST_CASE("backward: quadratic, disconnection and non-scalar loss") {
  Rng rng(2);
  Tape<double> tape;
  M w = random_matrix(rng, 3, 2);
  auto wv = tape.leaf({3, 2}, w, true);
  auto unused = tape.leaf({2}, M::Ones(1, 2), true);
  auto loss = sum(square(wv));
  tape.backward(loss);
  CHECK((tape.grad(wv) - 2.0 * w).cwiseAbs().maxCoeff() < 1e-15);
  M g_unused = tape.grad(unused);
  CHECK(g_unused.size() == 2);
  CHECK((g_unused.array() == 0.0).all());

  CHECK_THROWS_AS(tape.backward(square(wv)), ContractError);
}

TEST_CASE("backward through a composite graph matches finite differences") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Array<double>> inputs{ctp::testing::random_array(rng, {3, 4}),
                                      ctp::testing::random_array(rng, {4, 2}),
                                      ctp::testing::random_array(rng, {2})};
    auto fn = [](Tape<double>&, const std::vector<Var<double>>& v) {
      auto h = tanh(add_bias(matmul(v[0], v[1]), v[2]));
      auto s = softmax_rows(h);
      return mean(mul(s, sigmoid(h)));
    };
    CHECK(gradcheck(fn, inputs) < 1e-4);
  }
}

TEST_CASE("every primitive passes the finite-difference check") {
  for (const auto& spec : ctp::testing::primitive_catalog()) {
    Rng rng(1000 + spec.name.size());
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      auto c = spec.make(rng);
      worst = std::max(worst, gradcheck(c.fn, c.inputs));
    }
    INFO(spec.name);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("tape order is topological and forward evaluation is pure") {
  Rng rng(8);
  M a = random_matrix(rng, 4, 3), b = random_matrix(rng, 3, 3);
  auto run = [&](Tape<double>& tape) {
    auto x = tape.leaf({4, 3}, a, true);
    auto y = tape.leaf({3, 3}, b, true);
    auto h = tanh(matmul(x, y));
    return sum(square(sub(h, softmax_rows(h))));
  };
  Tape<double> t1, t2;
  auto l1 = run(t1);
  auto l2 = run(t2);
  CHECK(l1.item() == l2.item());
  for (std::size_t i = 0; i < t1.size(); ++i)
    for (std::size_t in : t1.node(i).inputs) CHECK(in < i);
}

TEST_CASE("adam: null update, first-step magnitude, determinism, shape contract") {
  ParameterStore<double> store;
  store.add("w", Array<double>({2}, mat({{0.5, -0.25}})));

  SUBCASE("all-zero gradient leaves parameters unchanged") {
    OptimizerState<double> state;
    GradientMap<double> g{{"w", M::Zero(1, 2)}};
    adam_step(store, g, state);
    CHECK(store.get("w").values == mat({{0.5, -0.25}}));
    CHECK(state.step == 1);
  }

  SUBCASE("first step moves by about the learning rate") {
    OptimizerState<double> state;
    state.hyper.learning_rate = 0.01;
    GradientMap<double> g{{"w", mat({{3.0, -0.2}})}};
    adam_step(store, g, state);
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
    CHECK(store.get("w").values(0, 0) == doctest::Approx(0.5 - 0.01).epsilon(1e-9));
    CHECK(store.get("w").values(0, 1) == doctest::Approx(-0.25 + 0.01).epsilon(1e-9));
  }

  SUBCASE("same inputs twice give bitwise-identical results") {
    ParameterStore<double> copy = store;
    OptimizerState<double> s1, s2;
    GradientMap<double> g{{"w", mat({{0.7, 0.1}})}};
    for (int i = 0; i < 3; ++i) {
      adam_step(store, g, s1);
      adam_step(copy, g, s2);
    }
    CHECK(store == copy);
    CHECK(s1 == s2);
  }

  SUBCASE("mismatched gradient shape is a contract error") {
    OptimizerState<double> state;
    GradientMap<double> g{{"w", M::Zero(2, 2)}};
    CHECK_THROWS_AS(adam_step(store, g, state), ContractError);
    CHECK(state.step == 0);
  }
}

TEST_CASE("global-norm clipping rescales to the limit") {
  GradientMap<double> g{{"a", mat({{3.0}})}, {"b", mat({{4.0}})}};
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g["a"](0, 0) == doctest::Approx(0.6));
  CHECK(g["b"](0, 0) == doctest::Approx(0.8));
}
