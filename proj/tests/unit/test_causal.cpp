#include "doctest.h"

#include <cmath>
#include <numbers>

#include "ctp/causal/causal.hpp"
#include "support/gradcheck.hpp"
#include "support/model_fixtures.hpp"

using namespace ctp;
using namespace ctp::testing;
using M = Matrix<double>;

namespace {

InterventionSpec spec_of(InterventionMode mode, Phase phase, std::uint64_t seed = 1) {
  InterventionSpec s;
  s.mode = mode;
  s.phase = phase;
  s.rng = Rng(seed);
  return s;
}

double univariate_nll(double x, double mu, double s) {
  const double z = (x - mu) / s;
  return 0.5 * std::log(2 * std::numbers::pi) + std::log(s) + 0.5 * z * z;
}

}  // namespace

TEST_CASE("zero intervention and random at eval are exact zeros") {
  Rng rng(3);
  Tape<double> tape;
  const auto x = tape.leaf({5, 7}, random_matrix(rng, 5, 7), true);
  for (auto [mode, phase] : {std::pair{InterventionMode::zero, Phase::train}, {InterventionMode::zero, Phase::eval},
                             {InterventionMode::random, Phase::eval}}) {
    auto s = spec_of(mode, phase);
    const auto v = make_intervention(s, x);
    CHECK(v.shape() == x.shape());
    CHECK(v.value().isZero(0.0));
  }
}

TEST_CASE("random intervention in training is uniform on [-0.1, 0.1]") {
  Tape<double> tape(false);
  const auto x = tape.constant({1000, 100}, M::Zero(1000, 100));
  auto s = spec_of(InterventionMode::random, Phase::train, 11);
  const M v = make_intervention(s, x).value();
  CHECK(v.minCoeff() >= -0.1);
  CHECK(v.maxCoeff() <= 0.1);
  CHECK(std::abs(v.mean()) < 0.002);
  // variance of U[-h, h] is h^2 / 3
  CHECK(v.array().square().mean() == doctest::Approx(0.01 / 3).epsilon(0.02));
  const M again = make_intervention(s, x).value();
  CHECK_FALSE(again.isApprox(v));
}

TEST_CASE("mean intervention keeps a running mean") {
  Tape<double> tape(false);
  M a(2, 3);
  a << 1, 2, 3, 3, 4, 5;
  auto s = spec_of(InterventionMode::mean, Phase::train);
  const M first = make_intervention(s, tape.constant(a)).value();
  CHECK(first.row(0).isApprox(Eigen::RowVector3d(2, 3, 4)));
  CHECK(first.row(1) == first.row(0));

  const M b = M::Constant(4, 3, 10.0);
  const M second = make_intervention(s, tape.constant(b)).value();
  CHECK(second.rows() == 4);
  CHECK(second(0, 0) == doctest::Approx(0.99 * 2 + 0.01 * 10));
  CHECK(second(3, 2) == doctest::Approx(0.99 * 4 + 0.01 * 10));

  s.phase = Phase::eval;
  const M frozen = make_intervention(s, tape.constant(M::Constant(2, 3, -50.0))).value();
  CHECK(frozen.row(0) == second.row(0));
  CHECK(s.running_mean.row(0) == second.row(0).cast<double>());

  CHECK_THROWS_AS(make_intervention(s, tape.constant(M::Zero(2, 4))), ContractError);
}

TEST_CASE("mean intervention at eval without training is an error") {
  Tape<double> tape(false);
  auto s = spec_of(InterventionMode::mean, Phase::eval);
  CHECK_THROWS_AS(make_intervention(s, tape.constant(M::Ones(2, 2))), ContractError);
}

TEST_CASE("intervention modes parse") {
  CHECK(parse_intervention_mode("zero") == InterventionMode::zero);
  CHECK(parse_intervention_mode("mean") == InterventionMode::mean);
  CHECK(parse_intervention_mode("random") == InterventionMode::random);
  CHECK_THROWS_AS(parse_intervention_mode("none"), ContractError);
  CHECK(std::string(to_string(InterventionMode::random)) == "random");
}

TEST_CASE("dual pass on a linear toy model gives W(x - x')") {
  Rng rng(5);
  Tape<double> tape;
  const M xv = random_matrix(rng, 4, 3), wv = random_matrix(rng, 3, 2);
  const auto x = tape.leaf({4, 3}, xv, true);
  const auto w = tape.leaf({3, 2}, wv, true);
  auto forward = [&](const Var<double>* o) { return matmul(o ? *o : x, w); };

  auto zero = spec_of(InterventionMode::zero, Phase::train);
  const auto bz = dual_pass<double>(forward, x, zero);
  CHECK(bz.causal.value().isApprox(xv * wv, 1e-12));

  auto mean = spec_of(InterventionMode::mean, Phase::train);
  const auto bm = dual_pass<double>(forward, x, mean);
  const M centered = xv.rowwise() - xv.colwise().mean();
  CHECK(bm.causal.value().isApprox(centered * wv, 1e-12));

  // d sum(causal) / dx = 1 W^T because the intervention is a constant
  tape.backward(sum(bm.causal));
  const M expect = M::Ones(4, 2) * wv.transpose();
  CHECK(tape.grad(x).isApprox(expect, 1e-12));
}

TEST_CASE("causal prediction is factual minus counterfactual") {
  Rng rng(17);
  for (Family fam : {Family::stgat, Family::stgcnn}) {
    const ModelConfig c = fam == Family::stgat ? ModelConfig::stgat_default() : ModelConfig::stgcnn_default();
    for (int trial = 0; trial < 50; ++trial) {
      const auto store = init_parameters<double>(c, rng.next_u64());
      const SceneWindow w = random_window(rng, 1 + static_cast<Index>(rng.below(4)));
      const auto batch = make_batch<double>(w);
      Tape<double> tape(false);
      Binding<double> p(tape, store, false);
      auto s = spec_of(trial % 2 ? InterventionMode::random : InterventionMode::zero, Phase::train, rng.next_u64());
      const auto z = tape.constant(random_matrix(rng, w.size(), c.noise_dim));
      const auto b = causal_predict(p, c, batch, &s, z, tape);
      CHECK((b.causal.value() - (b.factual.value() - b.counterfactual.value())).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("baseline prediction has no counterfactual") {
  Rng rng(2);
  const ModelConfig c = ModelConfig::stgat_default();
  const auto store = init_parameters<double>(c, 4);
  const SceneWindow w = random_window(rng, 3);
  const auto batch = make_batch<double>(w);
  Tape<double> tape(false);
  Binding<double> p(tape, store, false);
  const auto z = tape.constant(M::Zero(3, c.noise_dim));
  const auto b = causal_predict(p, c, batch, nullptr, z, tape);
  CHECK_FALSE(b.counterfactual.valid());
  CHECK(b.causal.value() == b.factual.value());
  CHECK(b.factual.value() == stgat_forward(p, c, batch, z, tape).value());
}

TEST_CASE("intervening with the factual feature cancels") {
  Rng rng(8);
  const ModelConfig c = ModelConfig::stgat_default();
  const auto store = init_parameters<double>(c, 9);
  const SceneWindow w = random_window(rng, 3);
  const auto batch = make_batch<double>(w);
  Tape<double> tape(false);
  Binding<double> p(tape, store, false);
  const auto z = tape.constant(random_matrix(rng, 3, c.noise_dim));
  const auto enc = stgat_encode(p, c, batch, tape);
  auto forward = [&](const Var<double>* o) { return stgat_decode(p, c, o ? *o : enc.motion, enc.interaction, z); };
  const auto f = forward(nullptr);
  const auto cf = forward(&enc.motion);
  CHECK((f - cf).value().isZero(0.0));
}

TEST_CASE("random at eval matches zero at eval bitwise") {
  Rng rng(12);
  for (Family fam : {Family::stgat, Family::stgcnn}) {
    const ModelConfig c = fam == Family::stgat ? ModelConfig::stgat_default() : ModelConfig::stgcnn_default();
    const auto store = init_parameters<double>(c, 21);
    const SceneWindow w = random_window(rng, 4);
    const auto batch = make_batch<double>(w);
    const M zv = random_matrix(rng, 4, c.noise_dim);
    auto run = [&](InterventionMode mode) {
      Tape<double> tape(false);
      Binding<double> p(tape, store, false);
      auto s = spec_of(mode, Phase::eval, 99);
      return causal_predict(p, c, batch, &s, tape.constant(zv), tape).causal.value().eval();
    };
    CHECK(run(InterventionMode::random) == run(InterventionMode::zero));
  }
}

TEST_CASE("same noise gives the same causal prediction") {
  Rng rng(13);
  const ModelConfig c = ModelConfig::stgat_default();
  const auto store = init_parameters<double>(c, 22);
  const SceneWindow w = random_window(rng, 3);
  const auto batch = make_batch<double>(w);
  const M zv = random_matrix(rng, 3, c.noise_dim);
  auto run = [&](const M& zm) {
    Tape<double> tape(false);
    Binding<double> p(tape, store, false);
    auto s = spec_of(InterventionMode::zero, Phase::eval);
    return causal_predict(p, c, batch, &s, tape.constant(zm), tape).causal.value().eval();
  };
  CHECK(run(zv) == run(zv));
  CHECK_FALSE(run(zv) == run(random_matrix(rng, 3, c.noise_dim)));
}

TEST_CASE("stgcnn passes share the factual adjacency") {
  Rng rng(14);
  const ModelConfig c = ModelConfig::stgcnn_default();
  const auto store = init_parameters<double>(c, 23);
  const SceneWindow w = random_window(rng, 4);
  const auto batch = make_batch<double>(w);
  Tape<double> tape(false);
  Binding<double> p(tape, store, false);
  auto s = spec_of(InterventionMode::random, Phase::train, 5);
  const auto b = causal_predict(p, c, batch, &s, Var<double>(), tape);
  REQUIRE(b.factual_adjacency);
  REQUIRE(b.counterfactual_adjacency);
  REQUIRE(b.factual_adjacency->size() == static_cast<std::size_t>(kObsLen));
  for (std::size_t t = 0; t < b.factual_adjacency->size(); ++t) {
    CHECK((*b.factual_adjacency)[t] == (*b.counterfactual_adjacency)[t]);
    CHECK((*b.factual_adjacency)[t] == batch.adjacency[t]);
  }
  REQUIRE(b.gaussian);
  CHECK(b.gaussian->mu.rows() == 4 * kPredLen);
  CHECK(reshape(b.gaussian->mu, {4, 2 * kPredLen}).value() == b.causal.value());
}

TEST_CASE("causal l2 loss examples") {
  Tape<double> tape(false);
  M last(1, 2);
  last << 1.0, -2.0;
  M disp = M::Zero(1, 24);
  M future(1, 24);
  for (Index t = 0; t < kPredLen; ++t) {
    disp(0, 2 * t) = 0.1;
    future(0, 2 * t) = 1.0 + 0.1 * static_cast<double>(t + 1);
    future(0, 2 * t + 1) = -2.0;
  }
  CHECK(causal_l2_loss(tape.constant(disp), last, future).item() == doctest::Approx(0.0).epsilon(1e-12));

  // every decoded point off by (0.3, 0.4): squared distance 0.25
  M off = future;
  for (Index t = 0; t < kPredLen; ++t) {
    off(0, 2 * t) += 0.3;
    off(0, 2 * t + 1) += 0.4;
  }
  CHECK(causal_l2_loss(tape.constant(disp), last, off).item() == doctest::Approx(0.25));

  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const Index n = 1 + static_cast<Index>(rng.below(4));
    CHECK(causal_l2_loss(tape.constant(random_matrix(rng, n, 24)), random_matrix(rng, n, 2), random_matrix(rng, n, 24))
              .item() >= 0.0);
  }
  CHECK_THROWS_AS(causal_l2_loss(tape.constant(disp), last, M(M::Zero(2, 24))), ContractError);
}

TEST_CASE("bivariate nll at the mean with unit scale is log 2 pi") {
  Tape<double> tape(false);
  const Index n = 2;
  GaussianVars<double> g{tape.constant(M::Zero(n * 12, 2)), tape.constant(M::Ones(n * 12, 2)),
                         tape.constant(M::Zero(n * 12, 1))};
  CHECK(causal_nll_loss(M(M::Zero(n, 24)), g).item() == doctest::Approx(std::log(2 * std::numbers::pi)));
}

TEST_CASE("bivariate nll factorizes when rho is zero") {
  Rng rng(6);
  Tape<double> tape(false);
  const Index n = 3;
  const M target = random_matrix(rng, n, 24);
  const M mu = random_matrix(rng, n * 12, 2);
  const M sigma = (random_matrix(rng, n * 12, 2).array().abs() + 0.2).matrix();
  GaussianVars<double> g{tape.constant(mu), tape.constant(sigma), tape.constant(M::Zero(n * 12, 1))};
  double expect = 0;
  for (Index i = 0; i < n; ++i)
    for (Index t = 0; t < 12; ++t)
      for (Index d = 0; d < 2; ++d) expect += univariate_nll(target(i, 2 * t + d), mu(i * 12 + t, d), sigma(i * 12 + t, d));
  CHECK(causal_nll_loss(target, g).item() == doctest::Approx(expect / (n * 12)).epsilon(1e-12));
}

TEST_CASE("bivariate nll matches the closed form with correlation") {
  Tape<double> tape(false);
  M target = M::Zero(1, 24);
  target(0, 0) = 1.0;
  target(0, 1) = 0.5;
  M mu = M::Zero(12, 2), sigma = M::Ones(12, 2), rho = M::Zero(12, 1);
  sigma(0, 0) = 2.0;
  rho(0, 0) = 0.6;
  GaussianVars<double> g{tape.constant(mu), tape.constant(sigma), tape.constant(rho)};
  // step 0 by hand, the other 11 steps sit at the mean with unit scale
  const double nx = 0.5, ny = 0.5, r = 0.6;
  const double step0 = std::log(2 * std::numbers::pi) + std::log(2.0) + 0.5 * std::log(1 - r * r) +
                       (nx * nx + ny * ny - 2 * r * nx * ny) / (2 * (1 - r * r));
  CHECK(causal_nll_loss(target, g).item() ==
        doctest::Approx((step0 + 11 * std::log(2 * std::numbers::pi)) / 12).epsilon(1e-12));

  GaussianVars<double> bad{tape.constant(mu), tape.constant(M::Zero(12, 2)), tape.constant(rho)};
  CHECK_THROWS_AS(causal_nll_loss(target, bad), ContractError);
  GaussianVars<double> bad_rho{tape.constant(mu), tape.constant(sigma), tape.constant(M::Ones(12, 1))};
  CHECK_THROWS_AS(causal_nll_loss(target, bad_rho), ContractError);
}

TEST_CASE("bivariate nll gradient") {
  Rng rng(7);
  const Index n = 2;
  const M target = random_matrix(rng, n, 24);
  const M mu = random_matrix(rng, n * 12, 2);
  const M ls = 0.3 * random_matrix(rng, n * 12, 2);
  const M pr = random_matrix(rng, n * 12, 1);
  Fn f = [&](Tape<double>&, const std::vector<Var<double>>& v) {
    return causal_nll_loss(target, GaussianVars<double>{v[0], exp(v[1]), tanh(v[2])});
  };
  CHECK(gradcheck(f, {Array<double>({n * 12, 2}, mu), Array<double>({n * 12, 2}, ls), Array<double>({n * 12, 1}, pr)}) < 1e-6);
}

TEST_CASE("variety loss takes the minimum") {
  Tape<double> tape;
  std::vector<Var<double>> losses{tape.leaf({1, 1}, M::Constant(1, 1, 3.0), true), tape.leaf({1, 1}, M::Constant(1, 1, 1.5), true),
                                  tape.leaf({1, 1}, M::Constant(1, 1, 2.0), true)};
  const auto v = variety_loss<double>(losses);
  CHECK(v.item() == 1.5);
  tape.backward(v);
  CHECK(tape.grad(losses[0])(0, 0) == 0.0);
  CHECK(tape.grad(losses[1])(0, 0) == 1.0);

  std::vector<Var<double>> one{losses[2]};
  CHECK(variety_loss<double>(one).item() == 2.0);
  CHECK_THROWS_AS(variety_loss<double>(std::span<const Var<double>>{}), ContractError);

  Rng rng(4);
  const M last = random_matrix(rng, 2, 2), future = random_matrix(rng, 2, 24);
  std::vector<Var<double>> samples;
  double best = 1e300;
  for (int k = 0; k < 5; ++k) {
    samples.push_back(tape.constant(random_matrix(rng, 2, 24)));
    best = std::min(best, causal_l2_loss(samples.back(), last, future).item());
  }
  CHECK(variety_loss<double>(samples, last, future).item() == best);
}

TEST_CASE("gan losses at a constant half discriminator") {
  ParameterStore<double> disc = init_discriminator<double>({}, 3);
  for (auto& [name, array] : disc.entries()) disc.get(name).values.setZero();
  Rng rng(2);
  Tape<double> tape;
  Binding<double> trainable(tape, disc);
  Binding<double> frozen(tape, disc, false);
  const auto fake = tape.leaf({3, 24}, random_matrix(rng, 3, 24), true);
  const auto losses = gan_step_losses(trainable, frozen, random_matrix(rng, 3, 24), fake);
  CHECK(losses.discriminator.item() == doctest::Approx(2 * std::log(2.0)));
  CHECK(losses.generator.item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("gan losses touch only their own parameters") {
  Rng rng(3);
  const ModelConfig c = ModelConfig::stgat_default();
  const auto gen = init_parameters<double>(c, 1);
  const auto disc = init_discriminator<double>({}, 2);
  const SceneWindow w = random_window(rng, 3);
  const auto batch = make_batch<double>(w);

  auto run = [&](bool generator_side) {
    Tape<double> tape;
    Binding<double> g(tape, gen);
    Binding<double> d(tape, disc);
    Binding<double> dfrozen(tape, disc, false);
    auto s = spec_of(InterventionMode::zero, Phase::train);
    const auto b = causal_predict(g, c, batch, &s, tape.constant(random_matrix(rng, 3, c.noise_dim)), tape);
    const auto losses = gan_step_losses(d, dfrozen, w.future, b.causal);
    const auto loss = generator_side ? losses.generator : losses.discriminator;
    tape.backward(loss);
    double gen_norm = 0, disc_norm = 0;
    for (const auto& name : g.names()) gen_norm += tape.grad(g[name]).squaredNorm();
    for (const auto& name : d.names()) disc_norm += tape.grad(d[name]).squaredNorm();
    return std::pair{gen_norm, disc_norm};
  };
  const auto [g1, d1] = run(true);
  CHECK(g1 > 0.0);
  CHECK(d1 == 0.0);
  const auto [g2, d2] = run(false);
  CHECK(g2 == 0.0);
  CHECK(d2 > 0.0);
}

TEST_CASE("the counterfactual pass contributes to the gradient") {
  Rng rng(19);
  for (Family fam : {Family::stgat, Family::stgcnn}) {
    const ModelConfig c = fam == Family::stgat ? ModelConfig::stgat_default() : ModelConfig::stgcnn_default();
    const auto store = init_parameters<double>(c, 31);
    const SceneWindow w = random_window(rng, 3);
    const auto batch = make_batch<double>(w);
    const M zv = random_matrix(rng, 3, c.noise_dim);
    auto grads = [&](bool detach) {
      Tape<double> tape;
      Binding<double> p(tape, store);
      auto s = spec_of(InterventionMode::zero, Phase::train);
      const auto b = causal_predict(p, c, batch, &s, tape.constant(zv), tape);
      const auto causal = detach ? b.factual - tape.constant(b.counterfactual.value()) : b.causal;
      return backward(causal_l2_loss(causal, batch.last_obs, batch.future), p);
    };
    const auto full = grads(false), detached = grads(true);
    double diff = 0;
    for (const auto& [name, g] : full) diff += (g - detached.at(name)).squaredNorm();
    CHECK(diff > 1e-10);
  }
}

TEST_CASE("causal training loss gradient matches finite differences") {
  Rng rng(23);
  for (Family fam : {Family::stgat, Family::stgcnn}) {
    const ModelConfig c = fam == Family::stgat ? ModelConfig::stgat_default() : ModelConfig::stgcnn_default();
    const auto store = init_parameters<double>(c, 41);
    const SceneWindow w = random_window(rng, 3);
    const auto batch = make_batch<double>(w);
    const M zv = random_matrix(rng, 3, c.noise_dim);
    StoreFn f = [&](Tape<double>& tape, const Binding<double>& p) {
      auto s = spec_of(InterventionMode::zero, Phase::train);
      const auto b = causal_predict(p, c, batch, &s, tape.constant(zv), tape);
      if (fam == Family::stgat) return causal_l2_loss(b.causal, batch.last_obs, batch.future);
      return causal_nll_loss(batch.future_disp, *b.gaussian);
    };
    CHECK(gradcheck_store(f, store, rng, 4) < 1e-4);
  }
}
