#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ctp/grad/array.hpp"

namespace ctp {

inline constexpr Index kObsLen = 8;
inline constexpr Index kPredLen = 12;
inline constexpr Index kWindowLen = kObsLen + kPredLen;
inline constexpr double kFrameSeconds = 0.4;

using Positions = Matrix<double>;  // N x (T*2), column t*2+d

/// One row of an ETH/UCY-format file.
struct RawObservation {
  std::int64_t frame_id = 0;
  std::int64_t pedestrian_id = 0;
  double x = 0.0;
  double y = 0.0;

  bool operator==(const RawObservation&) const = default;
};

/// One prediction instance: N pedestrians present in all 20 consecutive
/// frames, split into 8 observed and 12 future positions (meters).
struct SceneWindow {
  std::string scene;
  std::int64_t start_frame = 0;
  std::vector<std::int64_t> pedestrian_ids;
  Positions observed;  // N x 16
  Positions future;    // N x 24
  double frame_step = kFrameSeconds;

  Index size() const { return static_cast<Index>(pedestrian_ids.size()); }

  Eigen::Vector2d observed_at(Index ped, Index t) const { return {observed(ped, 2 * t), observed(ped, 2 * t + 1)}; }
  Eigen::Vector2d future_at(Index ped, Index t) const { return {future(ped, 2 * t), future(ped, 2 * t + 1)}; }

  /// All 20 positions of one pedestrian as a 20 x 2 matrix.
  Matrix<double> track(Index ped) const;

  /// Throws ContractError if the window breaks its shape invariants.
  void validate() const;

  bool operator==(const SceneWindow&) const = default;
};

/// Parses whitespace-separated `frame_id pedestrian_id x y` rows. Blank lines
/// and lines starting with '#' are skipped. Ids written as integral floats
/// ("780.0") are accepted.
std::vector<RawObservation> parse_dataset_file(std::istream& in);

/// Writes observations in the same text format with 6 decimal places.
void write_dataset_file(std::ostream& out, const std::vector<RawObservation>& observations);

struct WindowOptions {
  Index t_obs = kObsLen;
  Index t_pred = kPredLen;
  Index stride = 1;
};

/// Cuts a scene into windows. Frames must sit on a common grid: every gap
/// between consecutive distinct frame ids is a multiple of the smallest gap
/// (frames with no observations are allowed). A window starts at every
/// `stride`-th grid frame and keeps the pedestrians present at all of its
/// frames; windows without such a pedestrian are skipped.
std::vector<SceneWindow> build_windows(const std::vector<RawObservation>& observations, const std::string& scene,
                                       const WindowOptions& options = {});

/// Flattens windows back into observations (one row per pedestrian per frame).
std::vector<RawObservation> window_observations(const std::vector<SceneWindow>& windows, std::int64_t frame_stride = 1);

/// Per-step displacement: row t is position(t+1) - position(t). Needs T >= 2.
Matrix<double> to_relative(const Matrix<double>& positions);

/// Cumulative sum of displacements starting at `anchor`; returns T+1 rows
/// with the anchor first.
Matrix<double> from_relative(const Matrix<double>& displacements, const Eigen::RowVector2d& anchor);

struct SceneSet {
  std::string name;
  std::vector<SceneWindow> train_windows;
  std::vector<SceneWindow> test_windows;
};

SceneSet build_scene_set(const std::string& name, const std::vector<RawObservation>& observations,
                         Index train_stride = 1, Index test_stride = kWindowLen);

struct DatasetSplit {
  std::string held_out;
  std::vector<SceneWindow> train;
  std::vector<SceneWindow> test;
};

/// One split per scene: its test windows form the test list, the training
/// windows of every other scene form the train list.
std::vector<DatasetSplit> leave_one_out(const std::vector<SceneSet>& scenes);

/// Loads `<dir>/<scene>.txt` files, one scene per file, sorted by name.
std::vector<SceneSet> load_scene_directory(const std::string& dir, Index train_stride = 1,
                                           Index test_stride = kWindowLen);

std::vector<RawObservation> read_dataset_path(const std::string& path);

}  // namespace ctp
