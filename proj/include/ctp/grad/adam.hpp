#pragma once

#include <cmath>
#include <cstdint>

#include "ctp/grad/parameters.hpp"

namespace ctp {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct OptimizerState {
  AdamHyper hyper;
  std::int64_t step = 0;
  std::map<std::string, Matrix<Scalar>> first_moment;
  std::map<std::string, Matrix<Scalar>> second_moment;

  bool operator==(const OptimizerState& o) const {
    return step == o.step && first_moment == o.first_moment && second_moment == o.second_moment;
  }
};

/// One bias-corrected adaptive-moment update over every parameter in `params`.
template <typename Scalar>
void adam_step(ParameterStore<Scalar>& params, const GradientMap<Scalar>& grads, OptimizerState<Scalar>& state) {
  for (const auto& [name, array] : params.entries()) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ContractError("adam_step: no gradient for parameter '" + name + "'");
    if (it->second.rows() != array.values.rows() || it->second.cols() != array.values.cols()) {
      throw ContractError("adam_step: gradient for '" + name + "' is " + std::to_string(it->second.rows()) + "x" +
                          std::to_string(it->second.cols()) + ", parameter is " + shape_string(array.shape));
    }
  }
  ++state.step;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const Scalar b1 = static_cast<Scalar>(h.beta1);
  const Scalar b2 = static_cast<Scalar>(h.beta2);
  const Scalar correction1 = static_cast<Scalar>(1.0 - std::pow(h.beta1, t));
  const Scalar correction2 = static_cast<Scalar>(1.0 - std::pow(h.beta2, t));
  const Scalar lr = static_cast<Scalar>(h.learning_rate);
  const Scalar eps = static_cast<Scalar>(h.epsilon);

  for (auto& [name, array] : params.entries()) {
    const Matrix<Scalar>& g = grads.at(name);
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.size() == 0) m = Matrix<Scalar>::Zero(g.rows(), g.cols());
    if (v.size() == 0) v = Matrix<Scalar>::Zero(g.rows(), g.cols());
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    array.values.array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + eps);
  }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename Scalar>
double clip_global_norm(GradientMap<Scalar>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += static_cast<double>(g.squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const Scalar factor = static_cast<Scalar>(max_norm / norm);
    for (auto& [name, g] : grads) g *= factor;
  }
  return norm;
}

}  // namespace ctp
