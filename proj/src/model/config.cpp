#include "ctp/model/config.hpp"

#include "ctp/data/trajectory.hpp"
#include "ctp/model/layers.hpp"

namespace ctp {

const char* to_string(Family f) { return f == Family::stgat ? "stgat" : "stgcnn"; }
const char* to_string(OutputMode m) { return m == OutputMode::point ? "point" : "gaussian"; }

Family parse_family(const std::string& s) {
  if (s == "stgat") return Family::stgat;
  if (s == "stgcnn") return Family::stgcnn;
  throw ContractError("unknown model family '" + s + "' (expected stgat or stgcnn)");
}

OutputMode parse_output_mode(const std::string& s) {
  if (s == "point") return OutputMode::point;
  if (s == "gaussian") return OutputMode::gaussian;
  throw ContractError("unknown output mode '" + s + "' (expected point or gaussian)");
}

ModelConfig ModelConfig::stgat_default() { return ModelConfig{}; }

ModelConfig ModelConfig::stgcnn_default() {
  ModelConfig c;
  c.family = Family::stgcnn;
  c.output = OutputMode::gaussian;
  return c;
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ContractError("model config: " + what);
  };
  if (family == Family::stgat) {
    need(output == OutputMode::point, "stgat emits point predictions");
    need(embed_dim >= 1 && motion_hidden >= 1 && gat_heads >= 1 && gat_head_dim >= 1 && gat_out_dim >= 1 &&
             graph_hidden >= 1,
         "stgat sizes must be >= 1");
    need(noise_dim >= 0, "noise_dim must be >= 0");
  } else {
    need(output == OutputMode::gaussian, "stgcnn emits gaussian predictions");
    need(channels >= 1 && st_layers >= 1 && txp_layers >= 1, "stgcnn sizes must be >= 1");
    need(kernel >= 1 && kernel % 2 == 1, "kernel must be odd");
    need(txp_kernel >= 1 && txp_kernel % 2 == 1, "txp_kernel must be odd");
  }
}

namespace {

Index lstm_count(Index in, Index hidden) { return 4 * hidden * (in + hidden + 1); }
Index gat_count(Index in, Index heads, Index head_dim) { return in * heads * head_dim + 3 * heads * head_dim; }
Index conv_count(Index in, Index out, Index k) { return out * in * k + out; }

}  // namespace

Index count_parameters(const ModelConfig& c) {
  c.validate();
  if (c.family == Family::stgat) {
    return linear_parameter_count(2, c.embed_dim) + lstm_count(c.embed_dim, c.motion_hidden) +
           gat_count(c.motion_hidden, c.gat_heads, c.gat_head_dim) +
           gat_count(c.gat_heads * c.gat_head_dim, 1, c.gat_out_dim) + lstm_count(c.gat_out_dim, c.graph_hidden) +
           linear_parameter_count(2, c.embed_dim) + lstm_count(c.embed_dim, c.decoder_hidden()) +
           linear_parameter_count(c.decoder_hidden(), 2);
  }
  Index n = 0;
  for (Index l = 0; l < c.st_layers; ++l) {
    n += conv_count(l == 0 ? 2 : c.channels, c.channels, 1) + conv_count(c.channels, c.channels, c.kernel);
  }
  n += conv_count(kObsLen, kPredLen, c.txp_kernel);
  n += (c.txp_layers - 1) * conv_count(kPredLen, kPredLen, c.txp_kernel);
  return n + linear_parameter_count(c.channels, 5);
}

template <typename Scalar>
ParameterStore<Scalar> init_parameters(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  Rng rng(seed);
  ParameterStore<Scalar> s;
  if (c.family == Family::stgat) {
    add_linear(s, "m_embed", 2, c.embed_dim, rng);
    add_lstm(s, "m_lstm", c.embed_dim, c.motion_hidden, rng);
    add_gat(s, "gat1", c.motion_hidden, c.gat_heads, c.gat_head_dim, rng);
    add_gat(s, "gat2", c.gat_heads * c.gat_head_dim, 1, c.gat_out_dim, rng);
    add_lstm(s, "g_lstm", c.gat_out_dim, c.graph_hidden, rng);
    add_linear(s, "d_embed", 2, c.embed_dim, rng);
    add_lstm(s, "d_lstm", c.embed_dim, c.decoder_hidden(), rng);
    add_linear(s, "d_out", c.decoder_hidden(), 2, rng);
    return s;
  }
  for (Index l = 0; l < c.st_layers; ++l) {
    const std::string name = "st" + std::to_string(l);
    add_conv(s, name + ".node", l == 0 ? 2 : c.channels, c.channels, 1, rng);
    add_conv(s, name + ".time", c.channels, c.channels, c.kernel, rng);
  }
  add_conv(s, "txp0", kObsLen, kPredLen, c.txp_kernel, rng);
  for (Index l = 1; l < c.txp_layers; ++l) add_conv(s, "txp" + std::to_string(l), kPredLen, kPredLen, c.txp_kernel, rng);
  add_linear(s, "head", c.channels, 5, rng);
  return s;
}

template ParameterStore<float> init_parameters<float>(const ModelConfig&, std::uint64_t);
template ParameterStore<double> init_parameters<double>(const ModelConfig&, std::uint64_t);

}  // namespace ctp
