#include "ctp/model/predictors.hpp"

#include <cmath>

namespace ctp {

namespace {

constexpr double kMaskedScore = -1e9;
// tanh rounds to +-1 for large inputs; the factor keeps |rho| < 1.
constexpr double kRhoLimit = 1.0 - 1e-6;

Matrix<double> observed_frame(const SceneWindow& w, Index t) {
  Matrix<double> p(w.size(), 2);
  for (Index i = 0; i < w.size(); ++i) p.row(i) = w.observed_at(i, t).transpose();
  return p;
}

// cumsum(T) maps N x 24 displacements to positions relative to the anchor;
// spread(R) copies the N x 2 anchor to every step.
template <typename Scalar>
const Matrix<Scalar>& cumsum_matrix() {
  static const Matrix<Scalar> m = [] {
    Matrix<Scalar> c = Matrix<Scalar>::Zero(2 * kPredLen, 2 * kPredLen);
    for (Index k = 0; k < kPredLen; ++k)
      for (Index t = k; t < kPredLen; ++t)
        for (Index d = 0; d < 2; ++d) c(2 * k + d, 2 * t + d) = Scalar(1);
    return c;
  }();
  return m;
}

template <typename Scalar>
Matrix<Scalar> spread_anchor(const Matrix<Scalar>& last_obs) {
  Matrix<Scalar> out(last_obs.rows(), 2 * kPredLen);
  for (Index t = 0; t < kPredLen; ++t) out.middleCols(2 * t, 2) = last_obs;
  return out;
}

}  // namespace

template <typename Scalar>
WindowBatch<Scalar> make_batch(std::span<const SceneWindow* const> windows) {
  if (windows.empty()) throw ContractError("make_batch: no windows");
  WindowBatch<Scalar> b;
  for (const SceneWindow* w : windows) {
    w->validate();
    b.spans.emplace_back(b.peds, w->size());
    b.peds += w->size();
  }
  const Index n = b.peds;
  Matrix<double> motion = Matrix<double>::Zero(n, 2 * kObsLen);
  Matrix<double> last(n, 2), future(n, 2 * kPredLen), future_disp(n, 2 * kPredLen);
  std::vector<Matrix<double>> adjacency(kObsLen, Matrix<double>::Zero(n, n));
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const SceneWindow& w = *windows[k];
    const Index row0 = b.spans[k].first;
    for (Index i = 0; i < w.size(); ++i) {
      for (Index t = 1; t < kObsLen; ++t) {
        motion.block<1, 2>(row0 + i, 2 * t) = (w.observed_at(i, t) - w.observed_at(i, t - 1)).transpose();
      }
      last.row(row0 + i) = w.observed_at(i, kObsLen - 1).transpose();
      future.row(row0 + i) = w.future.row(i);
      for (Index t = 0; t < kPredLen; ++t) {
        const Eigen::Vector2d prev = t == 0 ? w.observed_at(i, kObsLen - 1) : w.future_at(i, t - 1);
        future_disp.block<1, 2>(row0 + i, 2 * t) = (w.future_at(i, t) - prev).transpose();
      }
    }
    for (Index t = 0; t < kObsLen; ++t) {
      adjacency[static_cast<std::size_t>(t)].block(row0, row0, w.size(), w.size()) =
          adjacency_from_positions(observed_frame(w, t));
    }
  }
  Matrix<double> nodes(n, 2 * kObsLen);
  for (Index t = 0; t < kObsLen; ++t)
    for (Index d = 0; d < 2; ++d) nodes.col(d * kObsLen + t) = motion.col(2 * t + d);

  b.motion = motion.cast<Scalar>();
  b.nodes = nodes.cast<Scalar>();
  b.last_obs = last.cast<Scalar>();
  b.future = future.cast<Scalar>();
  b.future_disp = future_disp.cast<Scalar>();
  for (const auto& a : adjacency) b.adjacency.push_back(a.cast<Scalar>());
  if (b.windows() > 1) {
    b.mask = Matrix<Scalar>::Constant(n, n, static_cast<Scalar>(kMaskedScore));
    for (const auto& [row0, rows] : b.spans) b.mask.block(row0, row0, rows, rows).setZero();
  }
  return b;
}

template <typename Scalar>
WindowBatch<Scalar> make_batch(const SceneWindow& window) {
  const SceneWindow* one[] = {&window};
  return make_batch<Scalar>(std::span<const SceneWindow* const>(one));
}

template <typename Scalar>
Matrix<Scalar> expand_rows(const Matrix<Scalar>& per_window, const std::vector<std::pair<Index, Index>>& spans) {
  if (per_window.rows() != static_cast<Index>(spans.size())) {
    throw ContractError("expand_rows: " + std::to_string(per_window.rows()) + " rows for " +
                        std::to_string(spans.size()) + " windows");
  }
  Index total = 0;
  for (const auto& s : spans) total += s.second;
  Matrix<Scalar> out(total, per_window.cols());
  for (std::size_t w = 0; w < spans.size(); ++w) {
    out.middleRows(spans[w].first, spans[w].second).rowwise() = per_window.row(static_cast<Index>(w));
  }
  return out;
}

template <typename Scalar>
StgatEncoding<Scalar> stgat_encode(const Binding<Scalar>& p, const ModelConfig& config,
                                   const WindowBatch<Scalar>& batch, Tape<Scalar>& tape) {
  const Index n = batch.peds;
  const Var<Scalar> mask = batch.mask.size() ? tape.constant(batch.mask) : Var<Scalar>();
  LstmState<Scalar> m{tape.constant(Matrix<Scalar>::Zero(n, config.motion_hidden)),
                      tape.constant(Matrix<Scalar>::Zero(n, config.motion_hidden))};
  LstmState<Scalar> g{tape.constant(Matrix<Scalar>::Zero(n, config.graph_hidden)),
                      tape.constant(Matrix<Scalar>::Zero(n, config.graph_hidden))};
  for (Index t = 0; t < kObsLen; ++t) {
    const Var<Scalar> step = tape.constant(Matrix<Scalar>(batch.motion.middleCols(2 * t, 2)));
    m = lstm_cell(p, "m_lstm", linear(p, "m_embed", step), m);
    const Var<Scalar> att = gat_layer(p, "gat2", gat_layer(p, "gat1", m.h, config.gat_heads, mask), 1, mask);
    g = lstm_cell(p, "g_lstm", att, g);
  }
  return {m.h, g.h};
}

template <typename Scalar>
Var<Scalar> stgat_decode(const Binding<Scalar>& p, const ModelConfig& config, const Var<Scalar>& motion,
                         const Var<Scalar>& interaction, const Var<Scalar>& z) {
  Tape<Scalar>& tape = motion.tape();
  const Index n = motion.rows();
  if (motion.cols() != config.motion_hidden || interaction.rows() != n || interaction.cols() != config.graph_hidden) {
    throw ContractError("stgat_decode: features " + shape_string(motion.shape()) + " and " +
                        shape_string(interaction.shape()) + " do not match the config");
  }
  std::vector<Var<Scalar>> init{motion, interaction};
  if (config.noise_dim > 0) {
    if (!z.valid() || z.rows() != n || z.cols() != config.noise_dim) {
      throw ContractError("stgat_decode: noise must be " + std::to_string(n) + "x" + std::to_string(config.noise_dim));
    }
    init.push_back(z);
  }
  LstmState<Scalar> s{concat_cols<Scalar>(init), tape.constant(Matrix<Scalar>::Zero(n, config.decoder_hidden()))};
  Var<Scalar> prev = tape.constant(Matrix<Scalar>::Zero(n, 2));
  std::vector<Var<Scalar>> steps;
  steps.reserve(kPredLen);
  for (Index t = 0; t < kPredLen; ++t) {
    s = lstm_cell(p, "d_lstm", linear(p, "d_embed", prev), s);
    prev = linear(p, "d_out", s.h);
    steps.push_back(prev);
  }
  return concat_cols<Scalar>(steps);
}

template <typename Scalar>
Var<Scalar> stgat_forward(const Binding<Scalar>& p, const ModelConfig& config, const WindowBatch<Scalar>& batch,
                          const Var<Scalar>& z, Tape<Scalar>& tape, const Var<Scalar>* feature_override) {
  if (config.family != Family::stgat) throw ContractError("stgat_forward: config is not an stgat config");
  const StgatEncoding<Scalar> enc = stgat_encode(p, config, batch, tape);
  if (feature_override && feature_override->shape() != enc.motion.shape()) {
    throw ContractError("stgat_forward: override shape " + shape_string(feature_override->shape()) +
                        " differs from motion feature " + shape_string(enc.motion.shape()));
  }
  return stgat_decode(p, config, feature_override ? *feature_override : enc.motion, enc.interaction, z);
}

template <typename Scalar>
StgcnnOutput<Scalar> stgcnn_forward(const Binding<Scalar>& p, const ModelConfig& config,
                                    const WindowBatch<Scalar>& batch, Tape<Scalar>& tape,
                                    const Var<Scalar>* node_override) {
  if (config.family != Family::stgcnn) throw ContractError("stgcnn_forward: config is not an stgcnn config");
  const Index n = batch.peds;
  const Shape node_shape{n, 2, kObsLen};
  if (node_override && node_override->shape() != node_shape) {
    throw ContractError("stgcnn_forward: override shape " + shape_string(node_override->shape()) + " differs from " +
                        shape_string(node_shape));
  }
  Var<Scalar> x = node_override ? *node_override : tape.constant(node_shape, batch.nodes);
  const Index pad = (config.kernel - 1) / 2;
  for (Index l = 0; l < config.st_layers; ++l) {
    const std::string name = "st" + std::to_string(l);
    Var<Scalar> y = temporal_conv(x, p[name + ".node.w"], p[name + ".node.b"], 0);
    y = graph_conv(y, batch.adjacency);
    y = temporal_conv(y, p[name + ".time.w"], p[name + ".time.b"], pad);
    x = tanh(l == 0 ? y : y + x);
  }
  const Index txp_pad = (config.txp_kernel - 1) / 2;
  Var<Scalar> z = tanh(temporal_conv(swap_last_axes(x), p["txp0.w"], p["txp0.b"], txp_pad));
  for (Index l = 1; l < config.txp_layers; ++l) {
    const std::string name = "txp" + std::to_string(l);
    z = tanh(temporal_conv(z, p[name + ".w"], p[name + ".b"], txp_pad)) + z;
  }
  const Var<Scalar> raw = linear(p, "head", reshape(z, {n * kPredLen, config.channels}));
  StgcnnOutput<Scalar> out;
  out.params.mu = slice_cols(raw, 0, 2);
  out.params.sigma = exp(slice_cols(raw, 2, 2));
  out.params.rho = scale(tanh(slice_cols(raw, 4, 1)), static_cast<Scalar>(kRhoLimit));
  out.adjacency = &batch.adjacency;
  return out;
}

void GaussianParams::validate() const {
  if (sigma.rows() != mu.rows() || sigma.cols() != mu.cols() || rho.rows() != mu.rows() || 2 * rho.cols() != mu.cols()) {
    throw ContractError("gaussian params: inconsistent shapes");
  }
  if (!(sigma.array() > 0.0).all()) throw ContractError("gaussian params: sigma must be positive");
  if (!(rho.array().abs() < 1.0).all()) throw ContractError("gaussian params: |rho| must be below 1");
}

template <typename Scalar>
GaussianParams to_params(const GaussianVars<Scalar>& g) {
  const Index n = g.mu.rows() / kPredLen;
  GaussianParams out;
  out.mu = Eigen::Map<const Matrix<Scalar>>(g.mu.value().data(), n, 2 * kPredLen).template cast<double>();
  out.sigma = Eigen::Map<const Matrix<Scalar>>(g.sigma.value().data(), n, 2 * kPredLen).template cast<double>();
  out.rho = Eigen::Map<const Matrix<Scalar>>(g.rho.value().data(), n, kPredLen).template cast<double>();
  return out;
}

Eigen::Vector2d sample_bivariate(double mux, double muy, double sx, double sy, double rho, Rng& rng) {
  const double z1 = rng.normal();
  const double z2 = rng.normal();
  return {mux + sx * z1, muy + sy * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2)};
}

Matrix<double> sample_displacements(const GaussianParams& g, Rng& rng) {
  Matrix<double> out(g.mu.rows(), g.mu.cols());
  for (Index i = 0; i < g.mu.rows(); ++i) {
    for (Index t = 0; t < kPredLen; ++t) {
      const Eigen::Vector2d s = sample_bivariate(g.mu(i, 2 * t), g.mu(i, 2 * t + 1), g.sigma(i, 2 * t),
                                                 g.sigma(i, 2 * t + 1), g.rho(i, t), rng);
      out(i, 2 * t) = s.x();
      out(i, 2 * t + 1) = s.y();
    }
  }
  return out;
}

Matrix<double> decode_trajectory(const Matrix<double>& displacements, const Matrix<double>& last_obs) {
  if (displacements.cols() != 2 * kPredLen || last_obs.cols() != 2 || last_obs.rows() != displacements.rows()) {
    throw ContractError("decode_trajectory: displacements " + std::to_string(displacements.rows()) + "x" +
                        std::to_string(displacements.cols()) + " do not fit anchors " +
                        std::to_string(last_obs.rows()) + "x" + std::to_string(last_obs.cols()));
  }
  Matrix<double> out(displacements.rows(), displacements.cols());
  for (Index i = 0; i < displacements.rows(); ++i) {
    Eigen::RowVector2d p = last_obs.row(i);
    for (Index t = 0; t < kPredLen; ++t) {
      p += displacements.block<1, 2>(i, 2 * t);
      out.block<1, 2>(i, 2 * t) = p;
    }
  }
  return out;
}

template <typename Scalar>
Var<Scalar> decode_positions(const Var<Scalar>& displacements, const Matrix<Scalar>& last_obs) {
  if (displacements.cols() != 2 * kPredLen || last_obs.cols() != 2 || last_obs.rows() != displacements.rows()) {
    throw ContractError("decode_positions: displacements " + shape_string(displacements.shape()) +
                        " do not fit anchors " + std::to_string(last_obs.rows()) + "x" +
                        std::to_string(last_obs.cols()));
  }
  Tape<Scalar>& tape = displacements.tape();
  return matmul(displacements, tape.constant(cumsum_matrix<Scalar>())) + tape.constant(spread_anchor(last_obs));
}

#define CTP_INSTANTIATE_PREDICTORS(S)                                                                              \
  template WindowBatch<S> make_batch<S>(std::span<const SceneWindow* const>);                                     \
  template WindowBatch<S> make_batch<S>(const SceneWindow&);                                                     \
  template Matrix<S> expand_rows<S>(const Matrix<S>&, const std::vector<std::pair<Index, Index>>&);              \
  template StgatEncoding<S> stgat_encode<S>(const Binding<S>&, const ModelConfig&, const WindowBatch<S>&, Tape<S>&); \
  template Var<S> stgat_decode<S>(const Binding<S>&, const ModelConfig&, const Var<S>&, const Var<S>&,           \
                                  const Var<S>&);                                                                \
  template Var<S> stgat_forward<S>(const Binding<S>&, const ModelConfig&, const WindowBatch<S>&, const Var<S>&,  \
                                   Tape<S>&, const Var<S>*);                                                     \
  template StgcnnOutput<S> stgcnn_forward<S>(const Binding<S>&, const ModelConfig&, const WindowBatch<S>&,       \
                                             Tape<S>&, const Var<S>*);                                           \
  template GaussianParams to_params<S>(const GaussianVars<S>&);                                                  \
  template Var<S> decode_positions<S>(const Var<S>&, const Matrix<S>&);

CTP_INSTANTIATE_PREDICTORS(float)
CTP_INSTANTIATE_PREDICTORS(double)

}  // namespace ctp
