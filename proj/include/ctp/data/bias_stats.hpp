#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ctp/data/trajectory.hpp"

namespace ctp {

/// Pairwise interaction thresholds (meters, degrees).
struct BiasThresholds {
  double neighbor_radius = 3.0;
  double parallel_heading_deg = 15.0;
  double parallel_distance = 2.0;
  double parallel_min_frames = 8;
  double meet_far = 4.0;
  double meet_near = 1.0;
  double gather_distance = 2.0;
};

/// Per-pedestrian averages of interaction counts within one environment.
struct BiasReport {
  std::string environment;
  double neighbors_avg = 0.0;
  double parallel_avg = 0.0;
  double meet_avg = 0.0;
  double gather_avg = 0.0;
  BiasThresholds thresholds;
};

// For every pedestrian in every window, counts the other pedestrians that
//   - come within neighbor_radius at some frame (neighbors),
//   - share >= parallel_min_frames frames with a mean heading difference below
//     parallel_heading_deg and a mean separation below parallel_distance,
//   - are farther than meet_far at some frame and closer than meet_near at a
//     later one (meetings),
//   - have a separation whose least-squares slope over time is negative and
//     whose final value is below gather_distance (gatherings),
// and averages each count over all pedestrian instances.
BiasReport bias_stats(const std::vector<SceneWindow>& windows, const BiasThresholds& thresholds = {},
                      const std::string& environment = "");

void write_bias_csv(std::ostream& out, const std::vector<BiasReport>& reports);

/// Reads a file produced by write_bias_csv. Threshold values come from the
/// leading '#' line when present.
std::vector<BiasReport> read_bias_csv(std::istream& in);

}  // namespace ctp
