#include "ctp/causal/causal.hpp"

#include <cmath>
#include <numbers>

namespace ctp {

const char* to_string(InterventionMode m) {
  switch (m) {
    case InterventionMode::zero: return "zero";
    case InterventionMode::mean: return "mean";
    case InterventionMode::random: return "random";
  }
  return "?";
}

InterventionMode parse_intervention_mode(const std::string& s) {
  if (s == "zero") return InterventionMode::zero;
  if (s == "mean") return InterventionMode::mean;
  if (s == "random") return InterventionMode::random;
  throw ContractError("unknown intervention mode '" + s + "' (expected zero, mean or random)");
}

void InterventionSpec::validate() const {
  if (!(half_width > 0.0)) throw ContractError("intervention: half_width must be positive");
  if (!(decay >= 0.0 && decay < 1.0)) throw ContractError("intervention: decay must lie in [0, 1)");
  if (running_mean.size() && running_mean.rows() != 1) throw ContractError("intervention: running mean must be one row");
}

template <typename Scalar>
Var<Scalar> make_intervention(InterventionSpec& spec, const Var<Scalar>& factual) {
  spec.validate();
  Tape<Scalar>& tape = factual.tape();
  const Index rows = factual.rows(), cols = factual.cols();
  switch (spec.mode) {
    case InterventionMode::zero:
      return tape.constant(factual.shape(), Matrix<Scalar>::Zero(rows, cols));
    case InterventionMode::random: {
      Matrix<Scalar> v = Matrix<Scalar>::Zero(rows, cols);
      if (spec.phase == Phase::train) {
        for (Index i = 0; i < v.size(); ++i) {
          v.data()[i] = static_cast<Scalar>(spec.rng.uniform(-spec.half_width, spec.half_width));
        }
      }
      return tape.constant(factual.shape(), std::move(v));
    }
    case InterventionMode::mean: {
      if (spec.mean_ready() && spec.running_mean.cols() != cols) {
        throw ContractError("intervention: running mean has " + std::to_string(spec.running_mean.cols()) +
                            " features but the attachment point has " + std::to_string(cols));
      }
      if (spec.phase == Phase::train) {
        const Matrix<double> batch_mean = factual.value().template cast<double>().colwise().mean();
        if (!spec.mean_ready()) {
          spec.running_mean = batch_mean;
        } else {
          spec.running_mean = spec.decay * spec.running_mean + (1.0 - spec.decay) * batch_mean;
        }
      } else if (!spec.mean_ready()) {
        throw ContractError("intervention: mean mode at eval needs a running mean from training");
      }
      return tape.constant(factual.shape(), spec.running_mean.replicate(rows, 1).template cast<Scalar>());
    }
  }
  throw ContractError("intervention: unknown mode");
}

template <typename Scalar>
PredictionBundle<Scalar> causal_predict(const Binding<Scalar>& p, const ModelConfig& config,
                                        const WindowBatch<Scalar>& batch, InterventionSpec* spec,
                                        const Var<Scalar>& z, Tape<Scalar>& tape) {
  if (config.family == Family::stgat) {
    const StgatEncoding<Scalar> enc = stgat_encode(p, config, batch, tape);
    auto forward = [&](const Var<Scalar>* override) {
      return stgat_decode(p, config, override ? *override : enc.motion, enc.interaction, z);
    };
    PredictionBundle<Scalar> b;
    if (spec) {
      b = dual_pass<Scalar>(forward, enc.motion, *spec);
    } else {
      b.factual = forward(nullptr);
      b.causal = b.factual;
    }
    b.z = z;
    return b;
  }

  const Index n = batch.peds;
  std::vector<StgcnnOutput<Scalar>> outputs;
  auto forward = [&](const Var<Scalar>* override) {
    outputs.push_back(stgcnn_forward(p, config, batch, tape, override));
    return reshape(outputs.back().params.mu, {n, 2 * kPredLen});
  };
  PredictionBundle<Scalar> b;
  if (spec) {
    const Var<Scalar> nodes = tape.constant({n, 2, kObsLen}, batch.nodes);
    b = dual_pass<Scalar>(forward, nodes, *spec);
    b.counterfactual_adjacency = outputs[1].adjacency;
  } else {
    b.factual = forward(nullptr);
    b.causal = b.factual;
  }
  b.factual_adjacency = outputs[0].adjacency;
  b.gaussian = GaussianVars<Scalar>{reshape(b.causal, {n * kPredLen, 2}), outputs[0].params.sigma,
                                    outputs[0].params.rho};
  b.z = z;
  return b;
}

template <typename Scalar>
Var<Scalar> causal_l2_loss(const Var<Scalar>& displacements, const Matrix<Scalar>& last_obs,
                           const Matrix<Scalar>& future) {
  if (future.rows() != displacements.rows() || future.cols() != 2 * kPredLen) {
    throw ContractError("causal_l2_loss: prediction " + shape_string(displacements.shape()) + " vs ground truth " +
                        std::to_string(future.rows()) + "x" + std::to_string(future.cols()));
  }
  Tape<Scalar>& tape = displacements.tape();
  const Var<Scalar> diff = decode_positions(displacements, last_obs) - tape.constant(future);
  return scale(sum(square(diff)), static_cast<Scalar>(1.0 / static_cast<double>(future.rows() * kPredLen)));
}

template <typename Scalar>
Var<Scalar> causal_nll_loss(const Matrix<Scalar>& target, const GaussianVars<Scalar>& g) {
  const Index n = target.rows();
  if (target.cols() != 2 * kPredLen || g.mu.rows() != n * kPredLen || g.mu.cols() != 2 ||
      g.sigma.rows() != n * kPredLen || g.sigma.cols() != 2 || g.rho.rows() != n * kPredLen || g.rho.cols() != 1) {
    throw ContractError("causal_nll_loss: target " + std::to_string(target.rows()) + "x" +
                        std::to_string(target.cols()) + " does not fit gaussian " + shape_string(g.mu.shape()));
  }
  if (!(g.sigma.value().array() > Scalar(0)).all()) throw ContractError("causal_nll_loss: sigma must be positive");
  if (!(g.rho.value().array().abs() < Scalar(1)).all()) throw ContractError("causal_nll_loss: |rho| must be below 1");

  Tape<Scalar>& tape = g.mu.tape();
  const Matrix<Scalar> flat = Eigen::Map<const Matrix<Scalar>>(target.data(), n * kPredLen, 2);
  const Var<Scalar> norm = div(tape.constant(flat) - g.mu, g.sigma);
  const Var<Scalar> nx = slice_cols(norm, 0, 1);
  const Var<Scalar> ny = slice_cols(norm, 1, 1);
  const Var<Scalar> one_minus = add_scalar(neg(square(g.rho)), Scalar(1));
  const Var<Scalar> quad = square(nx) + square(ny) - scale(mul(mul(g.rho, nx), ny), Scalar(2));
  const Var<Scalar> total =
      sum(log(g.sigma)) + scale(sum(log(one_minus)), Scalar(0.5)) + scale(sum(div(quad, one_minus)), Scalar(0.5));
  return add_scalar(scale(total, static_cast<Scalar>(1.0 / static_cast<double>(n * kPredLen))),
                    static_cast<Scalar>(std::log(2.0 * std::numbers::pi)));
}

template <typename Scalar>
Var<Scalar> variety_loss(std::span<const Var<Scalar>> sample_losses) {
  if (sample_losses.empty()) throw ContractError("variety_loss: k must be >= 1");
  return minimum(sample_losses);
}

template <typename Scalar>
Var<Scalar> variety_loss(std::span<const Var<Scalar>> samples, const Matrix<Scalar>& last_obs,
                         const Matrix<Scalar>& future) {
  if (samples.empty()) throw ContractError("variety_loss: k must be >= 1");
  std::vector<Var<Scalar>> losses;
  losses.reserve(samples.size());
  for (const auto& s : samples) losses.push_back(causal_l2_loss(s, last_obs, future));
  return minimum<Scalar>(losses);
}

template <typename Scalar>
ParameterStore<Scalar> init_discriminator(const DiscriminatorConfig& config, std::uint64_t seed) {
  if (config.hidden < 1) throw ContractError("discriminator: hidden must be >= 1");
  Rng rng(seed);
  ParameterStore<Scalar> s;
  add_linear(s, "disc.l1", 2 * kPredLen, config.hidden, rng);
  add_linear(s, "disc.l2", config.hidden, 1, rng);
  return s;
}

template <typename Scalar>
Var<Scalar> discriminator_score(const Binding<Scalar>& disc, const Var<Scalar>& trajectory) {
  return sigmoid(linear(disc, "disc.l2", tanh(linear(disc, "disc.l1", trajectory))));
}

template <typename Scalar>
GanLosses<Scalar> gan_step_losses(const Binding<Scalar>& trainable, const Binding<Scalar>& frozen,
                                  const Matrix<Scalar>& real, const Var<Scalar>& fake) {
  Tape<Scalar>& tape = fake.tape();
  const Var<Scalar> d_real = discriminator_score(trainable, tape.constant(real));
  const Var<Scalar> d_fake = discriminator_score(trainable, tape.constant(fake.value()));
  GanLosses<Scalar> out;
  out.discriminator = neg(mean(safe_log(d_real)) + mean(safe_log(add_scalar(neg(d_fake), Scalar(1)))));
  out.generator = neg(mean(safe_log(discriminator_score(frozen, fake))));
  return out;
}

#define CTP_INSTANTIATE_CAUSAL(S)                                                                                   \
  template Var<S> make_intervention<S>(InterventionSpec&, const Var<S>&);                                           \
  template PredictionBundle<S> causal_predict<S>(const Binding<S>&, const ModelConfig&, const WindowBatch<S>&,       \
                                                 InterventionSpec*, const Var<S>&, Tape<S>&);                         \
  template Var<S> causal_l2_loss<S>(const Var<S>&, const Matrix<S>&, const Matrix<S>&);                             \
  template Var<S> causal_nll_loss<S>(const Matrix<S>&, const GaussianVars<S>&);                                     \
  template Var<S> variety_loss<S>(std::span<const Var<S>>);                                                         \
  template Var<S> variety_loss<S>(std::span<const Var<S>>, const Matrix<S>&, const Matrix<S>&);                    \
  template ParameterStore<S> init_discriminator<S>(const DiscriminatorConfig&, std::uint64_t);                      \
  template Var<S> discriminator_score<S>(const Binding<S>&, const Var<S>&);                                         \
  template GanLosses<S> gan_step_losses<S>(const Binding<S>&, const Binding<S>&, const Matrix<S>&, const Var<S>&);

CTP_INSTANTIATE_CAUSAL(float)
CTP_INSTANTIATE_CAUSAL(double)

}  // namespace ctp
