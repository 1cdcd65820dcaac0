#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ctp/data/trajectory.hpp"

namespace ctp {

enum class Context { A, B };
enum class Behavior { Left, Right, Stationary, Gather };

const char* to_string(Context c);
const char* to_string(Behavior b);

struct ScenarioConfig {
  Index scenes = 200;
  Index peds_min = 1;  // primary walkers per scene
  Index peds_max = 3;
  double p_left = 0.9;  // left-turn probability for context A; context B uses 1 - p
  double speed_min = 0.3;  // m/frame
  double speed_max = 0.5;
  double noise = 0.05;  // m
  double heading_spread_deg = 20.0;  // headings drawn from [-spread, spread]
  double turn_deg = 60.0;
  Index turn_frames = 3;
  double context_a_fraction = 0.5;
  double parallel_rate = 0.0;  // chance a walker gets a side-by-side companion
  double gather_rate = 0.0;    // chance a walker gets an approaching partner
  double lane_spacing = 4.0;   // m between walkers' starting lanes
  std::uint64_t seed = 0;

  /// Throws ContractError on an out-of-range field.
  void validate() const;
};

struct AgentLabel {
  Index scene = 0;
  std::int64_t pedestrian_id = 0;
  Context context = Context::A;
  Behavior behavior = Behavior::Left;
  bool primary = false;  // the walker whose turn follows the context rule

  bool operator==(const AgentLabel&) const = default;
};

struct SyntheticSceneSet {
  std::vector<SceneWindow> windows;  // one per scene
  std::vector<AgentLabel> labels;    // one per pedestrian per scene
};

// Each scene draws its context (A with probability context_a_fraction) and a
// number of walkers. Walkers move straight for 8 frames from separate lanes,
// then turn left with probability p_left (context A) or 1 - p_left (context B),
// rotating turn_deg over turn_frames frames. Context-A scenes carry one
// stationary obstacle pedestrian near the walkers' path. Companions copy a
// walker's path at a lateral offset; gatherers walk toward a walker's final
// position. All positions receive isotropic Gaussian noise.
SyntheticSceneSet generate(const ScenarioConfig& config);

/// Same structural settings, different p_left and disjoint derived seeds.
std::pair<SyntheticSceneSet, SyntheticSceneSet> biased_pair(const ScenarioConfig& config, double p_train,
                                                           double p_test);

/// Scene k occupies frames [k*20, k*20+19] times frame_stride; pedestrian
/// ids are already unique across scenes.
std::vector<RawObservation> synth_observations(const SyntheticSceneSet& set, std::int64_t frame_stride = 10);

void write_labels_csv(std::ostream& out, const std::vector<AgentLabel>& labels);
std::vector<AgentLabel> read_labels_csv(std::istream& in);

/// Fraction of primary context-`c` agents that turned left.
double left_turn_rate(const SyntheticSceneSet& set, Context c);

/// Geometric test: the last future step's heading is counter-clockwise of
/// the mean observed heading.
bool turned_left(const SceneWindow& w, Index ped);

}  // namespace ctp
