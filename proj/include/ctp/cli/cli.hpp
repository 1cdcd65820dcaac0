#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ctp/data/bias_stats.hpp"
#include "ctp/data/trajectory.hpp"

namespace ctp {

/// Dispatches `args` (program name first) to one of the subcommands ingest,
/// stats, synth, train, eval, time and report. Returns the exit code; usage
/// and errors go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Windows stored back to back, 20 frames each, frame ids stepping by 10.
void write_windows_file(const std::string& path, const std::vector<SceneWindow>& windows);
std::vector<SceneWindow> read_windows_file(const std::string& path, const std::string& scene);

/// A directory written by `ingest`: manifest.csv plus <scene>/train.txt and
/// <scene>/test.txt. Counts are checked against the manifest.
std::vector<SceneSet> read_bundle(const std::string& dir);

/// Grouped bars, one group per statistic, one bar per environment.
void write_bias_svg(std::ostream& out, const std::vector<BiasReport>& reports);

/// One panel per window: observed track, ground-truth future and prediction.
void write_trajectory_svg(std::ostream& out, std::span<const SceneWindow> windows,
                          std::span<const Matrix<double>> predictions);

}  // namespace ctp
