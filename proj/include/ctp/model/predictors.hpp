#pragma once

#include <span>
#include <utility>
#include <vector>

#include "ctp/data/trajectory.hpp"
#include "ctp/model/config.hpp"
#include "ctp/model/layers.hpp"

namespace ctp {

/// Several windows stacked along the pedestrian axis. Interaction terms stay
/// inside each window: adjacency is block diagonal and `mask` blocks
/// attention across windows.
template <typename Scalar>
struct WindowBatch {
  Index peds = 0;
  std::vector<std::pair<Index, Index>> spans;  // (first row, rows) per window
  Matrix<Scalar> motion;       // N x 16, displacement of step t at columns 2t, 2t+1; step 0 is zero
  Matrix<Scalar> nodes;        // N x 16, the same values laid out as {N, 2, 8}
  Matrix<Scalar> last_obs;     // N x 2
  Matrix<Scalar> future;       // N x 24 absolute positions
  Matrix<Scalar> future_disp;  // N x 24 displacements, the first relative to last_obs
  std::vector<Matrix<Scalar>> adjacency;  // kObsLen block-diagonal N x N
  Matrix<Scalar> mask;         // N x N; empty when the batch holds one window

  Index windows() const { return static_cast<Index>(spans.size()); }
};

template <typename Scalar>
WindowBatch<Scalar> make_batch(std::span<const SceneWindow* const> windows);

template <typename Scalar>
WindowBatch<Scalar> make_batch(const SceneWindow& window);

/// Repeats row w of `per_window` for every pedestrian of window w.
template <typename Scalar>
Matrix<Scalar> expand_rows(const Matrix<Scalar>& per_window, const std::vector<std::pair<Index, Index>>& spans);

template <typename Scalar>
struct StgatEncoding {
  Var<Scalar> motion;       // N x motion_hidden, last motion-encoder state
  Var<Scalar> interaction;  // N x graph_hidden
};

/// Motion encoder (embedding + LSTM over the 8 observed displacements) and
/// interaction encoder (two attention layers over the motion states of every
/// step, then an LSTM over time).
template <typename Scalar>
StgatEncoding<Scalar> stgat_encode(const Binding<Scalar>& p, const ModelConfig& config,
                                   const WindowBatch<Scalar>& batch, Tape<Scalar>& tape);

/// Decoder LSTM started from concat(motion, interaction, z) and a zero cell;
/// it is fed its own previous displacement, starting from zero. Returns
/// N x 24 displacements. `z` is N x noise_dim (ignored when noise_dim is 0).
template <typename Scalar>
Var<Scalar> stgat_decode(const Binding<Scalar>& p, const ModelConfig& config, const Var<Scalar>& motion,
                         const Var<Scalar>& interaction, const Var<Scalar>& z);

/// Encode then decode; `feature_override` replaces the motion feature.
template <typename Scalar>
Var<Scalar> stgat_forward(const Binding<Scalar>& p, const ModelConfig& config, const WindowBatch<Scalar>& batch,
                          const Var<Scalar>& z, Tape<Scalar>& tape, const Var<Scalar>* feature_override = nullptr);

/// Per pedestrian and step, row n*12 + t: mu and sigma are (N*12) x 2, rho is
/// (N*12) x 1.
template <typename Scalar>
struct GaussianVars {
  Var<Scalar> mu;
  Var<Scalar> sigma;
  Var<Scalar> rho;
};

template <typename Scalar>
struct StgcnnOutput {
  GaussianVars<Scalar> params;
  const std::vector<Matrix<Scalar>>* adjacency = nullptr;  // the matrices the graph layers used
};

/// Graph convolution over the observed displacement nodes {N, 2, 8} with the
/// batch's per-frame adjacency, temporal convolutions, an 8 -> 12 step
/// extrapolator and a linear head with identity / exp / tanh links.
/// `node_override` replaces the node features; adjacency is never touched.
template <typename Scalar>
StgcnnOutput<Scalar> stgcnn_forward(const Binding<Scalar>& p, const ModelConfig& config,
                                    const WindowBatch<Scalar>& batch, Tape<Scalar>& tape,
                                    const Var<Scalar>* node_override = nullptr);

/// Plain-value bivariate Gaussians, N pedestrians x 12 steps.
struct GaussianParams {
  Matrix<double> mu;     // N x 24
  Matrix<double> sigma;  // N x 24
  Matrix<double> rho;    // N x 12

  /// Throws ContractError unless sigma > 0 and |rho| < 1 everywhere.
  void validate() const;
};

template <typename Scalar>
GaussianParams to_params(const GaussianVars<Scalar>& g);

/// One draw via the Cholesky factor of [[sx^2, r sx sy], [r sx sy, sy^2]].
Eigen::Vector2d sample_bivariate(double mux, double muy, double sx, double sy, double rho, Rng& rng);

/// Independent per-step draws, N x 24 displacements.
Matrix<double> sample_displacements(const GaussianParams& g, Rng& rng);

/// Cumulative sum of N x 24 displacements from N x 2 anchors.
Matrix<double> decode_trajectory(const Matrix<double>& displacements, const Matrix<double>& last_obs);

/// Differentiable version of decode_trajectory.
template <typename Scalar>
Var<Scalar> decode_positions(const Var<Scalar>& displacements, const Matrix<Scalar>& last_obs);

}  // namespace ctp
