#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "cqed/count_trace.hpp"
#include "cqed/errors.hpp"

namespace cqed::analysis {

struct AveragedTrace {
  double bin_width = 0.0;
  double t0 = 0.0;
  std::size_t runs = 0;
  std::vector<double> mean;
  /// Standard error of the mean per bin; undefined for a single run.
  std::optional<std::vector<double>> std_error;

  double bin_center(std::size_t i) const { return t0 + (static_cast<double>(i) + 0.5) * bin_width; }
};

/// Pointwise mean and standard error of equally binned series.
inline AveragedTrace average_series(std::span<const std::vector<double>> series, double bin_width,
                                    double t0 = 0.0) {
  if (series.empty()) throw InputError("average_runs: no traces");
  const std::size_t n = series.front().size();
  for (const auto& s : series)
    if (s.size() != n) throw InputError("average_runs: traces differ in length");
  AveragedTrace out;
  out.bin_width = bin_width;
  out.t0 = t0;
  out.runs = series.size();
  out.mean.assign(n, 0.0);
  for (const auto& s : series)
    for (std::size_t i = 0; i < n; ++i) out.mean[i] += s[i];
  const double k = static_cast<double>(series.size());
  for (auto& m : out.mean) m /= k;
  if (series.size() > 1) {
    std::vector<double> se(n, 0.0);
    for (const auto& s : series)
      for (std::size_t i = 0; i < n; ++i) se[i] += (s[i] - out.mean[i]) * (s[i] - out.mean[i]);
    for (auto& v : se) v = std::sqrt(v / (k - 1.0) / k);
    out.std_error = std::move(se);
  }
  return out;
}

inline AveragedTrace average_runs(std::span<const CountTrace> traces) {
  if (traces.empty()) throw InputError("average_runs: no traces");
  std::vector<std::vector<double>> series;
  for (const auto& t : traces) {
    if (t.bin_width != traces.front().bin_width || t.size() != traces.front().size())
      throw InputError("average_runs: mismatched bin widths or lengths");
    series.push_back(t.as_doubles());
  }
  return average_series(series, traces.front().bin_width, traces.front().t0);
}

/// Centered moving sum over `window` bins (window forced odd).
inline std::vector<double> moving_sum(std::span<const double> y, std::size_t window) {
  const std::size_t half = window / 2;
  std::vector<double> prefix(y.size() + 1, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) prefix[i + 1] = prefix[i] + y[i];
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t a = i >= half ? i - half : 0;
    const std::size_t b = std::min(y.size(), i + half + 1);
    out[i] = prefix[b] - prefix[a];
  }
  return out;
}

struct PeakOptions {
  std::size_t smoothing_bins = 1;
  double threshold = 0.0;
  /// Peaks closer than this to a higher peak are suppressed.
  std::size_t min_separation_bins = 1;
};

/// Local maxima of the smoothed signal above threshold, with non-maximum
/// suppression. Returns ascending bin indices.
inline std::vector<std::size_t> find_peaks(std::span<const double> y, const PeakOptions& opt) {
  const auto s = moving_sum(y, std::max<std::size_t>(opt.smoothing_bins, 1));
  std::vector<std::size_t> cand;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] <= opt.threshold) continue;
    const bool left = i == 0 || s[i] > s[i - 1];
    // Plateaus count once, at their first bin.
    std::size_t j = i;
    while (j + 1 < s.size() && s[j + 1] == s[i]) ++j;
    const bool right = j + 1 == s.size() || s[j + 1] < s[i];
    if (left && right) cand.push_back(i);
  }
  std::sort(cand.begin(), cand.end(), [&](auto a, auto b) { return s[a] > s[b] || (s[a] == s[b] && a < b); });
  std::vector<std::size_t> kept;
  for (std::size_t c : cand) {
    const bool clear = std::all_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return (c > k ? c - k : k - c) >= opt.min_separation_bins;
    });
    if (clear) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

} // namespace cqed::analysis
