#include "ctp/data/bias_stats.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace ctp {
namespace {

constexpr double kMovingSpeed = 1e-6;
constexpr double kSlopeTolerance = 1e-9;

double wrapped_angle(double a) {
  while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  while (a < -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return std::abs(a);
}

struct PairCounts {
  bool neighbor = false, parallel = false, meet = false, gather = false;
};

PairCounts classify_pair(const Matrix<double>& a, const Matrix<double>& b, const BiasThresholds& th) {
  PairCounts out;
  const Index frames = a.rows();
  Eigen::VectorXd sep(frames);
  for (Index t = 0; t < frames; ++t) sep(t) = (a.row(t) - b.row(t)).norm();

  out.neighbor = (sep.array() < th.neighbor_radius).any();

  if (static_cast<double>(frames) >= th.parallel_min_frames) {
    double heading_sum = 0.0;
    int moving = 0;
    for (Index t = 0; t + 1 < frames; ++t) {
      const Eigen::RowVector2d va = a.row(t + 1) - a.row(t);
      const Eigen::RowVector2d vb = b.row(t + 1) - b.row(t);
      if (va.norm() < kMovingSpeed || vb.norm() < kMovingSpeed) continue;
      heading_sum += wrapped_angle(std::atan2(va.y(), va.x()) - std::atan2(vb.y(), vb.x()));
      ++moving;
    }
    if (moving > 0) {
      const double heading_deg = heading_sum / moving * 180.0 / std::numbers::pi;
      out.parallel = heading_deg < th.parallel_heading_deg && sep.mean() < th.parallel_distance;
    }
  }

  bool was_far = false;
  for (Index t = 0; t < frames && !out.meet; ++t) {
    if (was_far && sep(t) < th.meet_near) out.meet = true;
    if (sep(t) > th.meet_far) was_far = true;
  }

  const double t_mean = (static_cast<double>(frames) - 1.0) / 2.0;
  double cov = 0.0, var = 0.0;
  for (Index t = 0; t < frames; ++t) {
    cov += (static_cast<double>(t) - t_mean) * (sep(t) - sep.mean());
    var += (static_cast<double>(t) - t_mean) * (static_cast<double>(t) - t_mean);
  }
  const double slope = var > 0.0 ? cov / var : 0.0;
  out.gather = slope < -kSlopeTolerance && sep(frames - 1) < th.gather_distance;
  return out;
}

}  // namespace

BiasReport bias_stats(const std::vector<SceneWindow>& windows, const BiasThresholds& thresholds,
                      const std::string& environment) {
  BiasReport report;
  report.environment = environment;
  report.thresholds = thresholds;
  double instances = 0.0;
  for (const auto& w : windows) {
    const Index n = w.size();
    std::vector<Matrix<double>> tracks;
    for (Index i = 0; i < n; ++i) tracks.push_back(w.track(i));
    for (Index i = 0; i < n; ++i) {
      instances += 1.0;
      for (Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const PairCounts c = classify_pair(tracks[i], tracks[j], thresholds);
        report.neighbors_avg += c.neighbor;
        report.parallel_avg += c.parallel;
        report.meet_avg += c.meet;
        report.gather_avg += c.gather;
      }
    }
  }
  if (instances > 0.0) {
    report.neighbors_avg /= instances;
    report.parallel_avg /= instances;
    report.meet_avg /= instances;
    report.gather_avg /= instances;
  }
  return report;
}

void write_bias_csv(std::ostream& out, const std::vector<BiasReport>& reports) {
  const BiasThresholds th = reports.empty() ? BiasThresholds{} : reports.front().thresholds;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "# neighbor_radius=%g parallel_heading_deg=%g parallel_distance=%g parallel_min_frames=%g "
                "meet_far=%g meet_near=%g gather_distance=%g\n",
                th.neighbor_radius, th.parallel_heading_deg, th.parallel_distance, th.parallel_min_frames,
                th.meet_far, th.meet_near, th.gather_distance);
  out << buf;
  out << "environment,neighbors_avg,parallel_avg,meet_avg,gather_avg\n";
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f\n", r.environment.c_str(), r.neighbors_avg,
                  r.parallel_avg, r.meet_avg, r.gather_avg);
    out << buf;
  }
}

std::vector<BiasReport> read_bias_csv(std::istream& in) {
  BiasThresholds th;
  std::vector<BiasReport> reports;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream fields(line.substr(1));
      for (std::string kv; fields >> kv;) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = kv.substr(0, eq);
        const double value = std::stod(kv.substr(eq + 1));
        if (key == "neighbor_radius") th.neighbor_radius = value;
        else if (key == "parallel_heading_deg") th.parallel_heading_deg = value;
        else if (key == "parallel_distance") th.parallel_distance = value;
        else if (key == "parallel_min_frames") th.parallel_min_frames = value;
        else if (key == "meet_far") th.meet_far = value;
        else if (key == "meet_near") th.meet_near = value;
        else if (key == "gather_distance") th.gather_distance = value;
      }
      continue;
    }
    if (!header_seen) {
      if (line != "environment,neighbors_avg,parallel_avg,meet_avg,gather_avg") {
        throw ParseError(lineno, "unexpected bias CSV header '" + line + "'");
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 5) throw ParseError(lineno, "expected 5 columns");
    BiasReport r;
    r.environment = cells[0];
    try {
      r.neighbors_avg = std::stod(cells[1]);
      r.parallel_avg = std::stod(cells[2]);
      r.meet_avg = std::stod(cells[3]);
      r.gather_avg = std::stod(cells[4]);
    } catch (const std::exception&) {
      throw ParseError(lineno, "non-numeric value");
    }
    r.thresholds = th;
    reports.push_back(r);
  }
  if (!header_seen) throw ParseError(lineno, "missing bias CSV header");
  return reports;
}

}  // namespace ctp
