#ifndef COMPANDER_ANALYSIS_HPP
#define COMPANDER_ANALYSIS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "compander/tensor.hpp"

namespace compander {

/// Percentile levels used by every distribution trace: minimum, seven
/// interior levels, maximum.
inline constexpr std::array<double, 9> kTraceLevels{0, 7, 16, 31, 50, 69, 84, 93, 100};

/// Thresholds at which near-zero mass is reported side by side.
inline constexpr std::array<double, 3> kNearZeroDeltas{0.005, 0.01, 0.02};

/// Linear-interpolation percentiles on the sorted values: rank
/// r = level/100 * (N-1), result = s[floor(r)] + frac * (s[ceil(r)] -
/// s[floor(r)]). Level 0 is the minimum, level 100 the maximum.
inline std::vector<double> percentiles(std::span<const double> values,
                                       std::span<const double> levels) {
  if (values.empty()) throw std::invalid_argument("percentiles: empty input");
  for (double x : values)
    if (!std::isfinite(x)) throw std::invalid_argument("percentiles: non-finite value");
  for (double l : levels)
    if (!(l >= 0.0 && l <= 100.0))
      throw std::invalid_argument("percentiles: level " + std::to_string(l) +
                                  " outside [0, 100]");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  std::vector<double> out;
  out.reserve(levels.size());
  const double n1 = double(s.size() - 1);
  for (double l : levels) {
    double r = l / 100.0 * n1;
    std::size_t lo = std::size_t(r);
    std::size_t hi = std::min(lo + 1, s.size() - 1);
    double frac = r - double(lo);
    out.push_back(s[lo] + frac * (s[hi] - s[lo]));
  }
  return out;
}

inline std::vector<double> percentiles(const Tensor<double>& values,
                                       std::span<const double> levels) {
  return percentiles(std::span<const double>(values.data(), values.size()), levels);
}

/// Histogram plus the two scalar statistics the method is judged on.
/// 101 bins keep zero at a bin center so central mass is well defined.
struct DistributionSummary {
  static constexpr std::size_t kBins = 101;
  std::vector<double> bin_edges;        // kBins + 1 ascending edges
  std::vector<std::size_t> bin_counts;  // kBins counts, summing to N
  double delta = 0.0;
  double near_zero_fraction = 0.0;              // #{|w| < delta} / N
  std::optional<double> bound_utilization;      // max|w| / bound when given
};

inline DistributionSummary snapshot_layer(std::span<const double> w, double delta,
                                          std::optional<double> a_bound = std::nullopt) {
  if (w.empty()) throw std::invalid_argument("snapshot_layer: empty weights");
  if (!(delta > 0)) throw std::invalid_argument("snapshot_layer: delta must be > 0");
  double mx = 0;
  std::size_t near = 0;
  for (double x : w) {
    if (!std::isfinite(x)) throw std::invalid_argument("snapshot_layer: non-finite weight");
    mx = std::max(mx, std::abs(x));
    if (std::abs(x) < delta) ++near;
  }
  DistributionSummary s;
  s.delta = delta;
  s.near_zero_fraction = double(near) / double(w.size());
  if (a_bound) s.bound_utilization = mx / *a_bound;

  const std::size_t bins = DistributionSummary::kBins;
  s.bin_edges.resize(bins + 1);
  s.bin_counts.assign(bins, 0);
  for (std::size_t i = 0; i <= bins; ++i)
    s.bin_edges[i] = -mx + 2.0 * mx * double(i) / double(bins);
  if (mx == 0.0) {
    s.bin_counts[bins / 2] = w.size();
    return s;
  }
  for (double x : w) {
    double t = (x + mx) / (2.0 * mx) * double(bins);
    auto idx = std::size_t(std::min(std::max(t, 0.0), double(bins - 1)));
    ++s.bin_counts[idx];
  }
  return s;
}

inline DistributionSummary snapshot_layer(const Tensor<double>& w, double delta,
                                          std::optional<double> a_bound = std::nullopt) {
  return snapshot_layer(std::span<const double>(w.data(), w.size()), delta, a_bound);
}

/// Per-layer history of the 9-level percentile vector, one row per
/// recorded epoch. Rows are taken on materialized weights w, never on
/// the latent v.
struct DistributionTrace {
  std::string layer;
  std::vector<std::size_t> epochs;
  std::vector<std::array<double, 9>> rows;
};

inline void trace_epoch(DistributionTrace& trace, std::size_t epoch, const Tensor<double>& w) {
  if (!trace.epochs.empty() && epoch <= trace.epochs.back())
    throw std::invalid_argument("trace_epoch: epoch " + std::to_string(epoch) +
                                " not after " + std::to_string(trace.epochs.back()));
  auto p = percentiles(w, kTraceLevels);
  std::array<double, 9> row;
  std::copy(p.begin(), p.end(), row.begin());
  trace.epochs.push_back(epoch);
  trace.rows.push_back(row);
}

namespace detail {
inline void write_full_double(std::ostream& os, double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  os << buf;
}
}  // namespace detail

/// One row per epoch: epoch, then the nine percentile columns.
inline void write_trace_csv(const DistributionTrace& trace, std::ostream& os) {
  os << "epoch,min,p7,p16,p31,p50,p69,p84,p93,max\n";
  for (std::size_t r = 0; r < trace.rows.size(); ++r) {
    os << trace.epochs[r];
    for (double x : trace.rows[r]) {
      os << ',';
      detail::write_full_double(os, x);
    }
    os << '\n';
  }
}

inline std::string trace_csv_name(const std::string& layer) {
  return "trace_" + layer + ".csv";
}

inline void write_trace_json(const DistributionTrace& trace, std::ostream& os) {
  os << "{\"layer\":\"" << trace.layer << "\",\"levels\":[";
  for (std::size_t i = 0; i < kTraceLevels.size(); ++i)
    os << (i ? "," : "") << kTraceLevels[i];
  os << "],\"epochs\":[";
  for (std::size_t i = 0; i < trace.epochs.size(); ++i)
    os << (i ? "," : "") << trace.epochs[i];
  os << "],\"rows\":[";
  for (std::size_t r = 0; r < trace.rows.size(); ++r) {
    os << (r ? ",[" : "[");
    for (std::size_t i = 0; i < trace.rows[r].size(); ++i) {
      if (i) os << ',';
      detail::write_full_double(os, trace.rows[r][i]);
    }
    os << ']';
  }
  os << "]}";
}

}  // namespace compander

#endif  // COMPANDER_ANALYSIS_HPP
