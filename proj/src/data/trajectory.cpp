#include "ctp/data/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace ctp {

Matrix<double> SceneWindow::track(Index ped) const {
  Matrix<double> out(kWindowLen, 2);
  for (Index t = 0; t < kObsLen; ++t) out.row(t) = observed_at(ped, t).transpose();
  for (Index t = 0; t < kPredLen; ++t) out.row(kObsLen + t) = future_at(ped, t).transpose();
  return out;
}

void SceneWindow::validate() const {
  const Index n = size();
  if (n < 1) throw ContractError("window of scene '" + scene + "' has no pedestrians");
  if (observed.rows() != n || observed.cols() != 2 * kObsLen || future.rows() != n || future.cols() != 2 * kPredLen) {
    throw ContractError("window of scene '" + scene + "' has inconsistent position blocks");
  }
  if (!observed.allFinite() || !future.allFinite()) {
    throw ContractError("window of scene '" + scene + "' contains non-finite positions");
  }
}

namespace {

std::int64_t parse_id(const std::string& token, std::size_t line, const char* what) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(token, &used);
  } catch (const std::exception&) {
    throw ParseError(line, std::string("invalid ") + what + " '" + token + "'");
  }
  if (used != token.size() || !std::isfinite(value) || value != std::floor(value)) {
    throw ParseError(line, std::string("invalid ") + what + " '" + token + "'");
  }
  return static_cast<std::int64_t>(value);
}

double parse_coordinate(const std::string& token, std::size_t line) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(token, &used);
  } catch (const std::exception&) {
    throw ParseError(line, "invalid coordinate '" + token + "'");
  }
  if (used != token.size() || !std::isfinite(value)) throw ParseError(line, "invalid coordinate '" + token + "'");
  return value;
}

}  // namespace

std::vector<RawObservation> parse_dataset_file(std::istream& in) {
  std::vector<RawObservation> rows;
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    std::istringstream fields(text);
    std::vector<std::string> tokens;
    for (std::string tok; fields >> tok;) tokens.push_back(tok);
    if (tokens.empty() || tokens[0][0] == '#') continue;
    if (tokens.size() != 4) {
      throw ParseError(line, "expected 4 columns (frame_id pedestrian_id x y), found " + std::to_string(tokens.size()));
    }
    RawObservation obs;
    obs.frame_id = parse_id(tokens[0], line, "frame id");
    obs.pedestrian_id = parse_id(tokens[1], line, "pedestrian id");
    obs.x = parse_coordinate(tokens[2], line);
    obs.y = parse_coordinate(tokens[3], line);
    if (!seen.emplace(obs.frame_id, obs.pedestrian_id).second) {
      throw IntegrityError("line " + std::to_string(line) + ": duplicate observation for frame " +
                           std::to_string(obs.frame_id) + ", pedestrian " + std::to_string(obs.pedestrian_id));
    }
    rows.push_back(obs);
  }
  return rows;
}

void write_dataset_file(std::ostream& out, const std::vector<RawObservation>& observations) {
  char buf[128];
  for (const auto& o : observations) {
    std::snprintf(buf, sizeof(buf), "%lld\t%lld\t%.6f\t%.6f\n", static_cast<long long>(o.frame_id),
                  static_cast<long long>(o.pedestrian_id), o.x, o.y);
    out << buf;
  }
}

std::vector<SceneWindow> build_windows(const std::vector<RawObservation>& observations, const std::string& scene,
                                       const WindowOptions& options) {
  if (options.t_obs != kObsLen || options.t_pred != kPredLen) {
    throw ContractError("build_windows: only 8 observed + 12 future frames are supported");
  }
  if (options.stride < 1) throw ContractError("build_windows: stride must be >= 1");
  if (observations.empty()) return {};
  for (std::size_t i = 1; i < observations.size(); ++i) {
    if (observations[i].frame_id < observations[i - 1].frame_id) {
      throw ContractError("build_windows: observations are not sorted by frame");
    }
  }

  std::vector<std::int64_t> frames;
  for (const auto& o : observations) {
    if (frames.empty() || frames.back() != o.frame_id) frames.push_back(o.frame_id);
  }
  std::int64_t step = 0;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const std::int64_t gap = frames[i] - frames[i - 1];
    if (step == 0 || gap < step) step = gap;
  }
  if (step == 0) step = 1;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if ((frames[i] - frames[i - 1]) % step != 0) {
      throw IntegrityError("scene '" + scene + "': frame " + std::to_string(frames[i]) +
                           " breaks the frame progression of step " + std::to_string(step));
    }
  }

  const std::int64_t first = frames.front();
  const Index grid = static_cast<Index>((frames.back() - first) / step) + 1;
  std::vector<std::map<std::int64_t, Eigen::Vector2d>> at_frame(static_cast<std::size_t>(grid));
  for (const auto& o : observations) {
    at_frame[static_cast<std::size_t>((o.frame_id - first) / step)].emplace(o.pedestrian_id,
                                                                             Eigen::Vector2d(o.x, o.y));
  }

  std::vector<SceneWindow> windows;
  for (Index start = 0; start + kWindowLen <= grid; start += options.stride) {
    std::vector<std::int64_t> ids;
    for (const auto& [ped, pos] : at_frame[static_cast<std::size_t>(start)]) {
      bool full = true;
      for (Index t = 1; t < kWindowLen && full; ++t) {
        full = at_frame[static_cast<std::size_t>(start + t)].count(ped) > 0;
      }
      if (full) ids.push_back(ped);
    }
    if (ids.empty()) continue;
    SceneWindow w;
    w.scene = scene;
    w.start_frame = first + start * step;
    w.pedestrian_ids = ids;
    const Index n = static_cast<Index>(ids.size());
    w.observed.resize(n, 2 * kObsLen);
    w.future.resize(n, 2 * kPredLen);
    for (Index i = 0; i < n; ++i) {
      for (Index t = 0; t < kWindowLen; ++t) {
        const auto& p = at_frame[static_cast<std::size_t>(start + t)].at(ids[static_cast<std::size_t>(i)]);
        if (t < kObsLen) {
          w.observed.block<1, 2>(i, 2 * t) = p.transpose();
        } else {
          w.future.block<1, 2>(i, 2 * (t - kObsLen)) = p.transpose();
        }
      }
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

std::vector<RawObservation> window_observations(const std::vector<SceneWindow>& windows, std::int64_t frame_stride) {
  std::vector<RawObservation> rows;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const auto& w = windows[k];
    for (Index t = 0; t < kWindowLen; ++t) {
      const std::int64_t frame = (static_cast<std::int64_t>(k) * kWindowLen + t) * frame_stride;
      for (Index i = 0; i < w.size(); ++i) {
        const Eigen::Vector2d p = t < kObsLen ? w.observed_at(i, t) : w.future_at(i, t - kObsLen);
        rows.push_back({frame, w.pedestrian_ids[static_cast<std::size_t>(i)], p.x(), p.y()});
      }
    }
  }
  return rows;
}

Matrix<double> to_relative(const Matrix<double>& positions) {
  if (positions.rows() < 2) throw ContractError("to_relative: need at least 2 positions");
  return positions.bottomRows(positions.rows() - 1) - positions.topRows(positions.rows() - 1);
}

Matrix<double> from_relative(const Matrix<double>& displacements, const Eigen::RowVector2d& anchor) {
  if (displacements.cols() != 2) throw ContractError("from_relative: displacements must have 2 columns");
  Matrix<double> out(displacements.rows() + 1, 2);
  out.row(0) = anchor;
  for (Index t = 0; t < displacements.rows(); ++t) out.row(t + 1) = out.row(t) + displacements.row(t);
  return out;
}

SceneSet build_scene_set(const std::string& name, const std::vector<RawObservation>& observations,
                         Index train_stride, Index test_stride) {
  SceneSet set;
  set.name = name;
  set.train_windows = build_windows(observations, name, {kObsLen, kPredLen, train_stride});
  set.test_windows = build_windows(observations, name, {kObsLen, kPredLen, test_stride});
  return set;
}

std::vector<DatasetSplit> leave_one_out(const std::vector<SceneSet>& scenes) {
  if (scenes.size() < 2) throw ContractError("leave_one_out: need at least 2 scenes, got " + std::to_string(scenes.size()));
  std::set<std::string> names;
  for (const auto& s : scenes) {
    if (!names.insert(s.name).second) throw ContractError("leave_one_out: scene '" + s.name + "' appears twice");
  }
  std::vector<DatasetSplit> splits;
  for (const auto& held : scenes) {
    DatasetSplit split;
    split.held_out = held.name;
    split.test = held.test_windows;
    for (const auto& other : scenes) {
      if (other.name == held.name) continue;
      split.train.insert(split.train.end(), other.train_windows.begin(), other.train_windows.end());
    }
    splits.push_back(std::move(split));
  }
  return splits;
}

std::vector<RawObservation> read_dataset_path(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trajectory file '" + path + "'");
  return parse_dataset_file(in);
}

std::vector<SceneSet> load_scene_directory(const std::string& dir, Index train_stride, Index test_stride) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("data directory '" + dir + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SceneSet> scenes;
  for (const auto& f : files) {
    scenes.push_back(build_scene_set(f.stem().string(), read_dataset_path(f.string()), train_stride, test_stride));
  }
  return scenes;
}

}  // namespace ctp
