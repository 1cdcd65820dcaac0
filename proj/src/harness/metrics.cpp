#include "ctp/harness/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

#include "ctp/data/trajectory.hpp"

namespace ctp {

AdeFde ade_fde(const Matrix<double>& pred, const Matrix<double>& gt, bool squared) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols() || pred.cols() != 2 * kPredLen || pred.rows() == 0) {
    throw ContractError("ade_fde: prediction " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                        " vs ground truth " + std::to_string(gt.rows()) + "x" + std::to_string(gt.cols()));
  }
  const Index n = pred.rows();
  Matrix<double> sq(n, kPredLen);
  for (Index t = 0; t < kPredLen; ++t) {
    sq.col(t) = (pred.middleCols(2 * t, 2) - gt.middleCols(2 * t, 2)).rowwise().squaredNorm();
  }
  const Matrix<double> d = squared ? sq : Matrix<double>(sq.cwiseSqrt());
  return {d.mean(), d.col(kPredLen - 1).mean()};
}

BestOfK best_of_k(std::span<const Matrix<double>> samples, const Matrix<double>& gt, bool squared) {
  if (samples.empty()) throw ContractError("best_of_k: k must be >= 1");
  BestOfK best;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const AdeFde m = ade_fde(samples[i], gt, squared);
    if (i == 0 || m.ade < best.metrics.ade) best = {m, i};
  }
  return best;
}

void MetricsRecord::validate() const {
  if (k < 1) throw ContractError("metrics record: k must be >= 1");
  if (!(ade >= 0.0) || !(fde >= 0.0)) throw ContractError("metrics record: ADE and FDE must be non-negative");
  if (!(sec_per_window >= 0.0)) throw ContractError("metrics record: negative timing");
}

std::vector<MetricsRecord> aggregate_by_scene(std::span<const MetricsRecord> records) {
  using Key = std::tuple<std::string, std::string, Index, std::uint64_t>;
  std::map<Key, std::size_t> slot;
  std::vector<MetricsRecord> out;
  std::vector<std::size_t> counts;
  for (const auto& r : records) {
    const Key key{r.scene, r.split, r.k, r.seed};
    auto [it, fresh] = slot.emplace(key, out.size());
    if (fresh) {
      out.push_back(r);
      out.back().ade = out.back().fde = out.back().sec_per_window = 0.0;
      counts.push_back(0);
    }
    MetricsRecord& agg = out[it->second];
    agg.ade += r.ade;
    agg.fde += r.fde;
    agg.sec_per_window += r.sec_per_window;
    ++counts[it->second];
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double c = static_cast<double>(counts[i]);
    out[i].ade /= c;
    out[i].fde /= c;
    out[i].sec_per_window /= c;
  }
  return out;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> records) {
  out << kMetricsHeader << '\n';
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, ",%lld,%.9f,%.9f,%llu,%.9f\n", static_cast<long long>(r.k), r.ade, r.fde,
                  static_cast<unsigned long long>(r.seed), r.sec_per_window);
    out << r.scene << ',' << r.split << buf;
  }
}

std::vector<MetricsRecord> read_metrics_csv(std::istream& in) {
  std::vector<MetricsRecord> records;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kMetricsHeader) throw ParseError(lineno, "unexpected metrics CSV header '" + line + "'");
      header_seen = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 7) throw ParseError(lineno, "expected 7 columns");
    MetricsRecord r;
    r.scene = cells[0];
    r.split = cells[1];
    try {
      r.k = std::stoll(cells[2]);
      r.ade = std::stod(cells[3]);
      r.fde = std::stod(cells[4]);
      r.seed = std::stoull(cells[5]);
      r.sec_per_window = std::stod(cells[6]);
    } catch (const std::exception&) {
      throw ParseError(lineno, "non-numeric value");
    }
    records.push_back(std::move(r));
  }
  if (!header_seen) throw ParseError(lineno, "empty metrics CSV");
  return records;
}

}  // namespace ctp
