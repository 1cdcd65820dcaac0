#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ctp/harness/checkpoint.hpp"
#include "ctp/harness/metrics.hpp"

namespace ctp {

struct LogRow {
  Index epoch = 0;
  double train_loss = 0.0;
  double val_ade = 0.0;  // NaN when there is no held-out list
  double val_fde = 0.0;

  bool operator==(const LogRow&) const = default;
};

inline constexpr const char* kLogHeader = "epoch,train_loss,val_ade,val_fde";

/// Header, then one row per epoch; a leading `# seed=<n>` line records the
/// run's seed. read_log skips `#` lines.
void write_log(std::ostream& out, std::span<const LogRow> rows, std::uint64_t seed);
std::vector<LogRow> read_log(std::istream& in);

/// Fresh parameters (and discriminator for the adversarial objective) for a
/// config, seeded from config.seed.
Checkpoint initial_checkpoint(const TrainConfig& config);

struct TrainOptions {
  std::string out_dir;  // when set: <out_dir>/checkpoint, <out_dir>/best, <out_dir>/log
  std::function<void(const LogRow&)> on_epoch;
};

struct TrainResult {
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;  // lowest held-out ADE; the final one without a held-out list
  Index best_epoch = 0;
  std::vector<LogRow> log;
};

/// Mini-batch training: each step stacks `batch_size` shuffled windows,
/// computes the objective on the causal prediction (or the plain one when
/// the intervention is disabled), clips and takes an Adam step. Throws
/// NumericError naming the step when a loss goes non-finite.
TrainResult train(const TrainConfig& config, std::span<const SceneWindow> train_windows,
                  std::span<const SceneWindow> val_windows, const TrainOptions& options = {});

/// Evaluation view of a checkpoint: eval-phase intervention, frozen running
/// mean.
class Predictor {
 public:
  /// Keeps a pointer to the checkpoint's parameters; the checkpoint must outlive it.
  explicit Predictor(const Checkpoint& checkpoint);
  explicit Predictor(Checkpoint&&) = delete;

  const TrainConfig& config() const { return config_; }

  /// k decoded predictions (N x 24 absolute positions). STGAT draws k noise
  /// vectors; STGCNN samples k times from the predicted Gaussians.
  std::vector<Matrix<double>> sample(const SceneWindow& window, Index k, Rng& rng) const;

  /// One prediction at batch size 1 with a fixed noise draw, as timed by
  /// time_inference. `dual` runs both passes; otherwise only the factual one.
  Matrix<float> infer(const SceneWindow& window, bool dual) const;

 private:
  TrainConfig config_;
  const ParameterStore<float>* params_;
  Matrix<double> running_mean_;
};

struct EvalOptions {
  Index k = 20;
  bool squared = false;
};

struct EvalResult {
  std::vector<MetricsRecord> per_window;  // scene field carries the window's scene
  std::vector<MetricsRecord> per_scene;   // mean over windows per (scene, seed)
};

/// Best-of-k ADE/FDE for every window and seed. Each window draws from its
/// own stream derived from (seed, window index).
EvalResult evaluate(const Checkpoint& checkpoint, std::span<const SceneWindow> windows, const std::string& split,
                    std::span<const std::uint64_t> seeds, const EvalOptions& options = {});

struct TimingResult {
  Index repetitions = 0;
  std::vector<double> seconds_per_window;  // one value per repetition
  double mean = 0.0;
};

TimingResult time_inference(const Checkpoint& checkpoint, std::span<const SceneWindow> windows, Index repetitions,
                            bool dual);

}  // namespace ctp
