#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctp/causal/causal.hpp"
#include "ctp/grad/adam.hpp"
#include "ctp/util/errors.hpp"

namespace ctp {

enum class Objective { causal_l2, variety_k, causal_nll, causal_gan };

const char* to_string(Objective o);
Objective parse_objective(const std::string& s);

struct TrainConfig {
  ModelConfig model = ModelConfig::stgat_default();

  // [intervention]
  bool causal = true;
  InterventionMode intervention = InterventionMode::random;
  double half_width = 0.1;
  double decay = 0.99;

  // [train]
  Objective objective = Objective::causal_l2;
  Index variety_k = 20;
  double gan_weight = 1.0;
  Index disc_hidden = 32;
  Index epochs = 100;
  Index batch_size = 32;
  AdamHyper adam;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
  Index eval_k = 1;

  // [data]
  std::string held_out;
  Index train_stride = 1;
  Index test_stride = kWindowLen;

  /// Cross-field checks (objective against family, sizes); empty when valid.
  std::vector<ConfigIssue> issues() const;
  void validate() const;

  InterventionSpec intervention_spec(Phase phase) const;

  bool operator==(const TrainConfig& o) const;
};

/// Parses sectioned `key = value` text ([model], [intervention], [train],
/// [data]; `#` starts a comment). Missing keys take their defaults; an
/// unset objective follows the family (stgat: causal_l2, stgcnn:
/// causal_nll). Throws ConfigError listing every problem with its line.
TrainConfig parse_train_config(const std::string& text);

/// Every field written out explicitly; parse_train_config reads it back to
/// an equal config.
std::string echo_train_config(const TrainConfig& config);

/// FNV-1a over the normalized [model] and [intervention] sections.
std::uint64_t config_digest(const TrainConfig& config);

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace ctp
