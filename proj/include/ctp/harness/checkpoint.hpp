#pragma once

#include <cstdint>
#include <string>

#include "ctp/harness/train_config.hpp"

namespace ctp {

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Everything needed to resume training or to evaluate. Values are 32-bit;
/// the running mean is kept at float precision so it round-trips exactly.
struct Checkpoint {
  std::uint16_t version = kCheckpointVersion;
  std::uint64_t step = 0;
  std::string config_text;  // normalized echo of the TrainConfig
  ParameterStore<float> params;
  OptimizerState<float> optimizer;
  Matrix<double> running_mean;  // empty unless the mean intervention has been updated
  ParameterStore<float> discriminator;  // empty unless the objective is adversarial
  OptimizerState<float> disc_optimizer;

  TrainConfig config() const { return parse_train_config(config_text); }
  Family family() const { return config().model.family; }
  std::uint64_t digest() const { return config_digest(config()); }

  bool operator==(const Checkpoint& o) const;
};

/// Layout, little endian: "CTPC", u16 version, u16 family, u64 config
/// digest, u64 step, u64 optimizer steps (model, discriminator), u32 config
/// length and text, u32 entry count, entries (u16 name length, name, u8
/// rank, u64 dims, u64 offset), u64 float count, float32 payload, u64
/// FNV-1a of everything before it.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
std::string serialize_checkpoint(const Checkpoint& checkpoint);

/// FormatError on bad magic, VersionError when the file is newer than this
/// build, IntegrityError on truncation or checksum mismatch.
Checkpoint load_checkpoint(const std::string& path);
Checkpoint deserialize_checkpoint(const std::string& bytes);

/// As load_checkpoint, then ContractError unless the digest matches.
Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_digest);

}  // namespace ctp
