#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ctp/grad/array.hpp"

namespace ctp {

struct AdeFde {
  double ade = 0.0;
  double fde = 0.0;
};

/// pred and gt are N x 24 absolute positions. ADE is the mean Euclidean
/// distance over pedestrians and steps, FDE the mean distance at the last
/// step. With `squared` both use squared distances instead.
AdeFde ade_fde(const Matrix<double>& pred, const Matrix<double>& gt, bool squared = false);

struct BestOfK {
  AdeFde metrics;
  std::size_t index = 0;  // which sample won
};

/// Picks the sample with the lowest ADE and reports that sample's FDE.
BestOfK best_of_k(std::span<const Matrix<double>> samples, const Matrix<double>& gt, bool squared = false);

struct MetricsRecord {
  std::string scene;
  std::string split;
  Index k = 1;
  double ade = 0.0;
  double fde = 0.0;
  std::uint64_t seed = 0;
  double sec_per_window = 0.0;

  void validate() const;
  bool operator==(const MetricsRecord&) const = default;
};

/// Mean ADE/FDE per (scene, split, k, seed), in first-seen order.
std::vector<MetricsRecord> aggregate_by_scene(std::span<const MetricsRecord> records);

inline constexpr const char* kMetricsHeader = "scene,split,k,ade,fde,seed,sec_per_window";

void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> records);
std::vector<MetricsRecord> read_metrics_csv(std::istream& in);

}  // namespace ctp
