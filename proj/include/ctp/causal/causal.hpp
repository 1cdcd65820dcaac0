#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctp/model/predictors.hpp"

namespace ctp {

enum class InterventionMode { zero, mean, random };
enum class Phase { train, eval };

const char* to_string(InterventionMode m);
InterventionMode parse_intervention_mode(const std::string& s);

/// What replaces the intervened feature x in the counterfactual pass.
struct InterventionSpec {
  InterventionMode mode = InterventionMode::zero;
  Phase phase = Phase::train;
  double half_width = 0.1;  // random mode draws from U[-half_width, half_width]
  double decay = 0.99;      // mean mode: running_mean <- decay * running_mean + (1 - decay) * batch mean
  Matrix<double> running_mean;  // 1 x F once initialized
  Rng rng;

  void validate() const;
  bool mean_ready() const { return running_mean.size() > 0; }
};

/// Replacement for a factual feature (rows are pedestrians). zero: zeros;
/// mean: the running mean broadcast to every row, updated from this batch
/// first when training (the first update takes the batch mean as is);
/// random: U[-h, h] when training, zeros at eval. Returned as a constant.
template <typename Scalar>
Var<Scalar> make_intervention(InterventionSpec& spec, const Var<Scalar>& factual);

template <typename Scalar>
struct PredictionBundle {
  Var<Scalar> factual;         // N x 24 displacements (the mean for gaussian models)
  Var<Scalar> counterfactual;  // invalid for non-causal predictions
  Var<Scalar> causal;          // factual - counterfactual, or factual itself
  Var<Scalar> intervention;    // the replacement feature that was used
  std::optional<GaussianVars<Scalar>> gaussian;  // causal mean with factual sigma and rho
  const std::vector<Matrix<Scalar>>* factual_adjacency = nullptr;
  const std::vector<Matrix<Scalar>>* counterfactual_adjacency = nullptr;
  Var<Scalar> z;
};

/// Core of the dual pass for any model written as forward(override): runs the
/// factual pass, builds the intervention from `factual_feature`, runs the
/// counterfactual pass and subtracts. Both passes share the tape, so
/// gradients flow through both.
template <typename Scalar, typename Forward>
PredictionBundle<Scalar> dual_pass(Forward&& forward, const Var<Scalar>& factual_feature, InterventionSpec& spec) {
  PredictionBundle<Scalar> b;
  b.factual = forward(nullptr);
  b.intervention = make_intervention(spec, factual_feature);
  b.counterfactual = forward(&b.intervention);
  b.causal = b.factual - b.counterfactual;
  return b;
}

/// Factual and counterfactual passes for either family. STGAT: the motion
/// feature is replaced and the encoder runs once; STGCNN: the node features
/// are replaced and the adjacency stays factual. With `spec` null this is the
/// plain baseline prediction (causal = factual). `z` is N x noise_dim for
/// STGAT and ignored for STGCNN.
template <typename Scalar>
PredictionBundle<Scalar> causal_predict(const Binding<Scalar>& p, const ModelConfig& config,
                                        const WindowBatch<Scalar>& batch, InterventionSpec* spec,
                                        const Var<Scalar>& z, Tape<Scalar>& tape);

/// Mean over pedestrians and steps of the squared Euclidean distance between
/// decoded positions and `future` (N x 24 absolute).
template <typename Scalar>
Var<Scalar> causal_l2_loss(const Var<Scalar>& displacements, const Matrix<Scalar>& last_obs,
                           const Matrix<Scalar>& future);

/// Mean bivariate-normal negative log density of target displacements
/// (N x 24) under per-step Gaussians.
template <typename Scalar>
Var<Scalar> causal_nll_loss(const Matrix<Scalar>& target, const GaussianVars<Scalar>& g);

/// Smallest of k per-sample losses.
template <typename Scalar>
Var<Scalar> variety_loss(std::span<const Var<Scalar>> sample_losses);

/// variety_loss over k sampled displacement sets, each scored with
/// causal_l2_loss.
template <typename Scalar>
Var<Scalar> variety_loss(std::span<const Var<Scalar>> samples, const Matrix<Scalar>& last_obs,
                         const Matrix<Scalar>& future);

/// Two-layer scorer over a flattened 12-step displacement sequence, sigmoid
/// output. Lives in its own ParameterStore.
struct DiscriminatorConfig {
  Index hidden = 32;
};

template <typename Scalar>
ParameterStore<Scalar> init_discriminator(const DiscriminatorConfig& config, std::uint64_t seed);

/// N x 24 -> N x 1 in (0, 1).
template <typename Scalar>
Var<Scalar> discriminator_score(const Binding<Scalar>& disc, const Var<Scalar>& trajectory);

template <typename Scalar>
struct GanLosses {
  Var<Scalar> generator;      // -mean log D(fake), through `frozen` so no discriminator gradient
  Var<Scalar> discriminator;  // -mean [log D(real) + log(1 - D(fake))], fake detached
};

template <typename Scalar>
GanLosses<Scalar> gan_step_losses(const Binding<Scalar>& trainable, const Binding<Scalar>& frozen,
                                  const Matrix<Scalar>& real, const Var<Scalar>& fake);

}  // namespace ctp
