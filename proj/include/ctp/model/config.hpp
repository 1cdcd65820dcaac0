#pragma once

#include <cstdint>
#include <string>

#include "ctp/grad/parameters.hpp"

namespace ctp {

enum class Family { stgat, stgcnn };
enum class OutputMode { point, gaussian };

const char* to_string(Family f);
const char* to_string(OutputMode m);
Family parse_family(const std::string& s);
OutputMode parse_output_mode(const std::string& s);

struct ModelConfig {
  Family family = Family::stgat;
  OutputMode output = OutputMode::point;

  // stgat
  Index embed_dim = 16;
  Index motion_hidden = 32;
  Index gat_heads = 4;
  Index gat_head_dim = 16;
  Index gat_out_dim = 32;
  Index graph_hidden = 32;
  Index noise_dim = 16;

  // stgcnn
  Index channels = 28;
  Index st_layers = 2;
  Index kernel = 3;
  Index txp_layers = 4;
  Index txp_kernel = 3;

  static ModelConfig stgat_default();
  static ModelConfig stgcnn_default();

  Index decoder_hidden() const { return motion_hidden + graph_hidden + noise_dim; }

  /// Throws ContractError when a size is out of range or the family and
  /// output mode do not go together.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Closed-form trainable scalar count for a config.
Index count_parameters(const ModelConfig& config);

/// Linear layer with bias: in*out + out.
inline Index linear_parameter_count(Index in, Index out) { return in * out + out; }

/// Parameters with Xavier-uniform weights and zero biases (LSTM forget-gate
/// bias 1). Deterministic in `seed`.
template <typename Scalar>
ParameterStore<Scalar> init_parameters(const ModelConfig& config, std::uint64_t seed);

}  // namespace ctp
