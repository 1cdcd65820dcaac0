#include "ctp/data/synth.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "ctp/util/rng.hpp"

namespace ctp {

const char* to_string(Context c) { return c == Context::A ? "A" : "B"; }

const char* to_string(Behavior b) {
  switch (b) {
    case Behavior::Left: return "left";
    case Behavior::Right: return "right";
    case Behavior::Stationary: return "stationary";
    case Behavior::Gather: return "gather";
  }
  return "?";
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& what) { throw ContractError("scenario config: " + what); };
  if (scenes < 1) fail("scenes must be >= 1");
  if (peds_min < 1 || peds_max < peds_min) fail("need 1 <= peds_min <= peds_max");
  if (!(p_left >= 0.0 && p_left <= 1.0)) fail("p_left must lie in [0, 1]");
  if (!(speed_min > 0.0 && speed_max >= speed_min)) fail("speed range must be positive");
  if (!(noise >= 0.0)) fail("noise must be >= 0");
  if (turn_frames < 1 || turn_frames > kPredLen) fail("turn_frames must lie in [1, 12]");
  if (!(context_a_fraction >= 0.0 && context_a_fraction <= 1.0)) fail("context_a_fraction must lie in [0, 1]");
  if (!(parallel_rate >= 0.0 && parallel_rate <= 1.0)) fail("parallel_rate must lie in [0, 1]");
  if (!(gather_rate >= 0.0 && gather_rate <= 1.0)) fail("gather_rate must lie in [0, 1]");
  if (!(lane_spacing > 0.0)) fail("lane_spacing must be positive");
}

namespace {

using Track = Matrix<double>;  // kWindowLen x 2

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr std::int64_t kIdsPerScene = 1000;

Track walk(const Eigen::RowVector2d& start, double heading, double speed, double turn, Index turn_frames) {
  Track t(kWindowLen, 2);
  t.row(0) = start;
  for (Index k = 0; k + 1 < kWindowLen; ++k) {
    const Index into_future = k - (kObsLen - 2);
    const double frac = into_future <= 0 ? 0.0 : std::min<double>(1.0, static_cast<double>(into_future) / turn_frames);
    const double a = heading + frac * turn;
    t.row(k + 1) = t.row(k) + speed * Eigen::RowVector2d(std::cos(a), std::sin(a));
  }
  return t;
}

Track linear(const Eigen::RowVector2d& from, const Eigen::RowVector2d& to) {
  Track t(kWindowLen, 2);
  for (Index k = 0; k < kWindowLen; ++k) {
    t.row(k) = from + (to - from) * (static_cast<double>(k) / (kWindowLen - 1));
  }
  return t;
}

void make_scene(const ScenarioConfig& cfg, Index scene, SyntheticSceneSet& out) {
  Rng rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(scene));
  const Context context = rng.bernoulli(cfg.context_a_fraction) ? Context::A : Context::B;
  const double p = context == Context::A ? cfg.p_left : 1.0 - cfg.p_left;
  const Index walkers = cfg.peds_min + static_cast<Index>(rng.below(static_cast<std::uint64_t>(cfg.peds_max - cfg.peds_min + 1)));

  std::vector<Track> tracks;
  std::vector<AgentLabel> labels;
  auto add = [&](Track t, Behavior b, bool primary) {
    labels.push_back({scene, scene * kIdsPerScene + static_cast<std::int64_t>(tracks.size()), context, b, primary});
    tracks.push_back(std::move(t));
  };

  std::vector<Track> companions, gatherers;
  std::vector<Behavior> companion_behavior;
  for (Index i = 0; i < walkers; ++i) {
    const double heading = rng.uniform(-cfg.heading_spread_deg, cfg.heading_spread_deg) * kDeg;
    const double speed = rng.uniform(cfg.speed_min, cfg.speed_max);
    const Eigen::RowVector2d start(rng.uniform(-1.0, 1.0), static_cast<double>(i) * cfg.lane_spacing + rng.uniform(-0.5, 0.5));
    const bool left = rng.bernoulli(p);
    const double turn = (left ? 1.0 : -1.0) * cfg.turn_deg * kDeg;
    Track path = walk(start, heading, speed, turn, cfg.turn_frames);

    if (rng.bernoulli(cfg.parallel_rate)) {
      const double gap = rng.uniform(0.6, 1.0);
      const Eigen::RowVector2d side(std::sin(heading) * gap, -std::cos(heading) * gap);
      companions.push_back(path.rowwise() + side);
      companion_behavior.push_back(left ? Behavior::Left : Behavior::Right);
    }
    if (rng.bernoulli(cfg.gather_rate)) {
      const double a = heading + (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(60.0, 120.0) * kDeg;
      const Eigen::RowVector2d dir(std::cos(a), std::sin(a));
      const Eigen::RowVector2d goal = path.row(kWindowLen - 1);
      gatherers.push_back(linear(goal + rng.uniform(5.0, 7.0) * dir, goal + rng.uniform(0.6, 1.0) * dir));
    }
    add(std::move(path), left ? Behavior::Left : Behavior::Right, true);
  }
  for (std::size_t i = 0; i < companions.size(); ++i) add(companions[i], companion_behavior[i], false);
  for (auto& g : gatherers) add(std::move(g), Behavior::Gather, false);
  if (context == Context::A) {
    const Eigen::RowVector2d spot = tracks.front().row(kObsLen - 1) +
                                    Eigen::RowVector2d(2.0 + rng.uniform(-0.5, 0.5), -1.5 + rng.uniform(-0.5, 0.5));
    add(linear(spot, spot), Behavior::Stationary, false);
  }

  SceneWindow w;
  w.scene = "synth";
  w.start_frame = static_cast<std::int64_t>(scene) * kWindowLen;
  const Index n = static_cast<Index>(tracks.size());
  w.observed.resize(n, 2 * kObsLen);
  w.future.resize(n, 2 * kPredLen);
  for (Index i = 0; i < n; ++i) {
    w.pedestrian_ids.push_back(labels[static_cast<std::size_t>(i)].pedestrian_id);
    for (Index t = 0; t < kWindowLen; ++t) {
      const double x = tracks[static_cast<std::size_t>(i)](t, 0) + rng.normal(0.0, cfg.noise);
      const double y = tracks[static_cast<std::size_t>(i)](t, 1) + rng.normal(0.0, cfg.noise);
      if (t < kObsLen) {
        w.observed(i, 2 * t) = x;
        w.observed(i, 2 * t + 1) = y;
      } else {
        w.future(i, 2 * (t - kObsLen)) = x;
        w.future(i, 2 * (t - kObsLen) + 1) = y;
      }
    }
  }
  out.windows.push_back(std::move(w));
  out.labels.insert(out.labels.end(), labels.begin(), labels.end());
}

}  // namespace

SyntheticSceneSet generate(const ScenarioConfig& config) {
  config.validate();
  SyntheticSceneSet out;
  for (Index s = 0; s < config.scenes; ++s) make_scene(config, s, out);
  return out;
}

std::pair<SyntheticSceneSet, SyntheticSceneSet> biased_pair(const ScenarioConfig& config, double p_train,
                                                           double p_test) {
  ScenarioConfig train = config, test = config;
  train.p_left = p_train;
  test.p_left = p_test;
  train.seed = Rng::mix(config.seed ^ 0x7261696eULL);
  test.seed = Rng::mix(config.seed ^ 0x74657374ULL);
  return {generate(train), generate(test)};
}

std::vector<RawObservation> synth_observations(const SyntheticSceneSet& set, std::int64_t frame_stride) {
  return window_observations(set.windows, frame_stride);
}

void write_labels_csv(std::ostream& out, const std::vector<AgentLabel>& labels) {
  out << "scene,pedestrian_id,context,behavior,primary\n";
  for (const auto& l : labels) {
    out << l.scene << ',' << l.pedestrian_id << ',' << to_string(l.context) << ',' << to_string(l.behavior) << ','
        << (l.primary ? 1 : 0) << '\n';
  }
}

std::vector<AgentLabel> read_labels_csv(std::istream& in) {
  std::vector<AgentLabel> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "scene,pedestrian_id,context,behavior,primary") throw ParseError(lineno, "unexpected labels header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != 5) throw ParseError(lineno, "expected 5 columns");
    AgentLabel l;
    try {
      l.scene = std::stoll(cells[0]);
      l.pedestrian_id = std::stoll(cells[1]);
    } catch (const std::exception&) {
      throw ParseError(lineno, "non-integer id");
    }
    if (cells[2] == "A") l.context = Context::A;
    else if (cells[2] == "B") l.context = Context::B;
    else throw ParseError(lineno, "unknown context '" + cells[2] + "'");
    if (cells[3] == "left") l.behavior = Behavior::Left;
    else if (cells[3] == "right") l.behavior = Behavior::Right;
    else if (cells[3] == "stationary") l.behavior = Behavior::Stationary;
    else if (cells[3] == "gather") l.behavior = Behavior::Gather;
    else throw ParseError(lineno, "unknown behavior '" + cells[3] + "'");
    l.primary = cells[4] == "1";
    labels.push_back(l);
  }
  return labels;
}

double left_turn_rate(const SyntheticSceneSet& set, Context c) {
  double total = 0.0, left = 0.0;
  for (const auto& l : set.labels) {
    if (!l.primary || l.context != c) continue;
    total += 1.0;
    left += l.behavior == Behavior::Left;
  }
  return total > 0.0 ? left / total : 0.0;
}

bool turned_left(const SceneWindow& w, Index ped) {
  const Eigen::Vector2d before = w.observed_at(ped, kObsLen - 1) - w.observed_at(ped, 0);
  const Eigen::Vector2d after = w.future_at(ped, kPredLen - 1) - w.future_at(ped, kPredLen / 2);
  return before.x() * after.y() - before.y() * after.x() > 0.0;
}

}  // namespace ctp
