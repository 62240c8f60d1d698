#pragma once

// Piecewise-constant segmentation of fluorescence traces and conversion of
// segment levels into atom numbers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "cqed/count_trace.hpp"
#include "cqed/errors.hpp"

namespace cqed::analysis {

struct StepFit {
  /// Index of the first bin of every segment after the first.
  std::vector<std::size_t> change_points;
  std::vector<double> levels;
  std::vector<int> atom_counts;
  double single_atom_unit = std::numeric_limits<double>::quiet_NaN();
  double background = 0.0;
  double noise_sigma = 0.0;
  double penalty = 0.0;

  std::size_t segment_count() const { return levels.size(); }
  std::size_t segment_begin(std::size_t k) const { return k == 0 ? 0 : change_points[k - 1]; }

  /// Atom number assigned to every bin of an n-bin trace.
  std::vector<int> per_bin_counts(std::size_t n) const {
    std::vector<int> out(n);
    for (std::size_t k = 0; k < levels.size(); ++k) {
      const std::size_t end = k + 1 < levels.size() ? change_points[k] : n;
      std::fill(out.begin() + static_cast<std::ptrdiff_t>(segment_begin(k)),
                out.begin() + static_cast<std::ptrdiff_t>(end), atom_counts[k]);
    }
    return out;
  }
  /// Reconstructed piecewise-constant signal.
  std::vector<double> per_bin_levels(std::size_t n) const {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < levels.size(); ++k) {
      const std::size_t end = k + 1 < levels.size() ? change_points[k] : n;
      std::fill(out.begin() + static_cast<std::ptrdiff_t>(segment_begin(k)),
                out.begin() + static_cast<std::ptrdiff_t>(end), levels[k]);
    }
    return out;
  }
};

struct StepOptions {
  std::size_t min_segment = 2;
  /// Cost per change point; NaN selects sigma^2 log N with sigma from first
  /// differences.
  double penalty = std::numeric_limits<double>::quiet_NaN();
  /// Calibration overrides; NaN means estimate from the level histogram.
  double background = std::numeric_limits<double>::quiet_NaN();
  double single_atom_unit = std::numeric_limits<double>::quiet_NaN();
};

/// Robust noise estimate: 1.4826 MAD of first differences / sqrt(2).
inline double difference_sigma(std::span<const double> y) {
  if (y.size() < 2) return 0.0;
  std::vector<double> d(y.size() - 1);
  for (std::size_t i = 1; i < y.size(); ++i) d[i - 1] = y[i] - y[i - 1];
  auto median = [](std::vector<double>& v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
    return m;
  };
  const double med = median(d);
  for (auto& v : d) v = std::abs(v - med);
  return 1.4826 * median(d) / std::sqrt(2.0);
}

/// Exact penalized least-squares segmentation (PELT pruning). Returns the
/// first index of each new segment.
inline std::vector<std::size_t> segment_signal(std::span<const double> y, std::size_t min_segment,
                                               double penalty) {
  const std::size_t n = y.size();
  if (min_segment < 1) min_segment = 1;
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = y[i] - mean;
    s1[i + 1] = s1[i] + v;
    s2[i + 1] = s2[i] + v * v;
  }
  auto cost = [&](std::size_t a, std::size_t b) {
    const double len = static_cast<double>(b - a);
    const double sum = s1[b] - s1[a];
    return std::max(0.0, (s2[b] - s2[a]) - sum * sum / len);
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> best(n + 1, inf);
  std::vector<std::size_t> prev(n + 1, 0);
  best[0] = -penalty;
  std::vector<std::size_t> candidates{0};
  for (std::size_t t = min_segment; t <= n; ++t) {
    double f = inf;
    std::size_t arg = 0;
    for (std::size_t s : candidates) {
      if (t - s < min_segment || best[s] == inf) continue;
      const double v = best[s] + cost(s, t) + penalty;
      if (v < f) {
        f = v;
        arg = s;
      }
    }
    best[t] = f;
    prev[t] = arg;
    std::vector<std::size_t> kept;
    kept.reserve(candidates.size() + 1);
    for (std::size_t s : candidates)
      if (t - s < min_segment || best[s] + cost(s, t) <= f) kept.push_back(s);
    if (t + min_segment <= n) kept.push_back(t);
    candidates.swap(kept);
  }

  std::vector<std::size_t> cps;
  for (std::size_t t = n; t > 0;) {
    const std::size_t s = prev[t];
    if (s > 0) cps.push_back(s);
    t = s;
  }
  std::reverse(cps.begin(), cps.end());
  return cps;
}

namespace detail {

inline std::vector<double> segment_means(std::span<const double> y, const std::vector<std::size_t>& cps) {
  std::vector<double> out;
  for (std::size_t k = 0; k <= cps.size(); ++k) {
    const std::size_t a = k == 0 ? 0 : cps[k - 1];
    const std::size_t b = k < cps.size() ? cps[k] : y.size();
    out.push_back(std::accumulate(y.begin() + static_cast<std::ptrdiff_t>(a),
                                  y.begin() + static_cast<std::ptrdiff_t>(b), 0.0) /
                  static_cast<double>(b - a));
  }
  return out;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

} // namespace detail

inline StepFit detect_steps(std::span<const double> y, const StepOptions& opt = {}) {
  const std::size_t min_seg = std::max<std::size_t>(opt.min_segment, 1);
  if (y.size() < 2 * min_seg) throw InputError("detect_steps: trace shorter than 2 * min_segment");

  StepFit fit;
  fit.noise_sigma = difference_sigma(y);
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double range = *hi - *lo;
  if (std::isnan(opt.penalty)) {
    fit.penalty = 2.0 * fit.noise_sigma * fit.noise_sigma * std::log(static_cast<double>(y.size()));
    fit.penalty = std::max(fit.penalty, 1e-6 * (1.0 + range * range));
  } else {
    fit.penalty = opt.penalty;
  }

  // Re-segment the reconstruction until it reproduces itself, so that the
  // returned segmentation is a fixed point.
  fit.change_points = segment_signal(y, min_seg, fit.penalty);
  for (int pass = 0; pass < 20; ++pass) {
    const auto means = detail::segment_means(y, fit.change_points);
    StepFit tmp;
    tmp.change_points = fit.change_points;
    tmp.levels = means;
    const auto recon = tmp.per_bin_levels(y.size());
    auto again = segment_signal(recon, min_seg, fit.penalty);
    if (again == fit.change_points) break;
    fit.change_points = std::move(again);
  }
  fit.levels = detail::segment_means(y, fit.change_points);

  const std::size_t nseg = fit.levels.size();
  std::vector<std::size_t> len(nseg);
  for (std::size_t k = 0; k < nseg; ++k)
    len[k] = (k + 1 < nseg ? fit.change_points[k] : y.size()) - fit.segment_begin(k);

  // Calibrate on segments long enough that their means are well determined;
  // short transients between them carry partial-bin occupancy.
  const std::size_t long_len = std::max<std::size_t>(min_seg, 4);
  std::vector<std::size_t> anchors;
  for (std::size_t k = 0; k < nseg; ++k)
    if (len[k] >= long_len) anchors.push_back(k);
  if (anchors.size() < 2) {
    anchors.resize(nseg);
    std::iota(anchors.begin(), anchors.end(), 0);
  }

  fit.single_atom_unit = opt.single_atom_unit;
  if (std::isnan(fit.single_atom_unit)) {
    std::vector<double> jumps;
    for (std::size_t i = 1; i < anchors.size(); ++i) {
      const std::size_t a = anchors[i - 1], b = anchors[i];
      const double sd = fit.noise_sigma * std::sqrt(1.0 / len[a] + 1.0 / len[b]);
      const double j = std::abs(fit.levels[b] - fit.levels[a]);
      if (j > 5.0 * sd && j > 1e-9 * (1.0 + range)) jumps.push_back(j);
    }
    if (!jumps.empty()) {
      const double u0 = detail::median(jumps);
      double sum = 0.0, steps = 0.0;
      for (double j : jumps) {
        const double k = std::round(j / u0);
        if (k < 1.0) continue;
        sum += j;
        steps += k;
      }
      fit.single_atom_unit = steps > 0.0 ? sum / steps : u0;
    }
  }

  fit.background = opt.background;
  if (std::isnan(fit.background)) {
    // A brief empty period at the start of a trace still sets the floor.
    const double floor_level = *std::min_element(fit.levels.begin(), fit.levels.end());
    const double tol = std::isfinite(fit.single_atom_unit) ? 0.5 * fit.single_atom_unit : 0.0;
    double acc = 0.0, w = 0.0;
    for (std::size_t k = 0; k < nseg; ++k)
      if (fit.levels[k] - floor_level <= tol) {
        acc += fit.levels[k] * static_cast<double>(len[k]);
        w += static_cast<double>(len[k]);
      }
    fit.background = acc / w;
  }

  for (double level : fit.levels) {
    int count = 0;
    if (std::isfinite(fit.single_atom_unit) && fit.single_atom_unit > 0.0)
      count = static_cast<int>(std::lround((level - fit.background) / fit.single_atom_unit));
    fit.atom_counts.push_back(std::max(count, 0));
  }
  return fit;
}

inline StepFit detect_steps(const CountTrace& trace, const StepOptions& opt = {}) {
  const auto y = trace.as_doubles();
  return detect_steps(std::span<const double>(y), opt);
}

/// (one-atom level - background level) / background noise sigma. nullopt when
/// no one-atom or no background segment exists; +inf for a noiseless
/// background.
inline std::optional<double> estimate_snr(std::span<const double> y, const StepFit& fit) {
  double bg_sum = 0.0, bg_n = 0.0, one_sum = 0.0, one_n = 0.0, ss = 0.0;
  for (std::size_t k = 0; k < fit.segment_count(); ++k) {
    const std::size_t a = fit.segment_begin(k);
    const std::size_t b = k + 1 < fit.segment_count() ? fit.change_points[k] : y.size();
    for (std::size_t i = a; i < b; ++i) {
      if (fit.atom_counts[k] == 0) {
        bg_sum += y[i];
        bg_n += 1.0;
        ss += (y[i] - fit.levels[k]) * (y[i] - fit.levels[k]);
      } else if (fit.atom_counts[k] == 1) {
        one_sum += y[i];
        one_n += 1.0;
      }
    }
  }
  if (one_n == 0.0 || bg_n < 2.0) return std::nullopt;
  const double bg_sigma = std::sqrt(ss / (bg_n - 1.0));
  const double step = one_sum / one_n - bg_sum / bg_n;
  if (bg_sigma == 0.0) return std::numeric_limits<double>::infinity();
  return step / bg_sigma;
}

inline std::optional<double> estimate_snr(const CountTrace& trace, const StepFit& fit) {
  const auto y = trace.as_doubles();
  return estimate_snr(std::span<const double>(y), fit);
}

// ---------------------------------------------------------------------------

struct Histogram {
  double lo = 0.0;
  double bin_width = 1.0;
  std::vector<std::size_t> counts;

  double center(std::size_t i) const { return lo + (static_cast<double>(i) + 0.5) * bin_width; }
};

inline Histogram make_histogram(std::span<const double> values, double lo, double hi, double bin_width) {
  if (!(bin_width > 0.0) || !(hi > lo)) throw InputError("histogram: invalid range");
  Histogram h{lo, bin_width, std::vector<std::size_t>(static_cast<std::size_t>(std::ceil((hi - lo) / bin_width)), 0)};
  for (double v : values) {
    if (v < lo || v >= hi) continue;
    h.counts[static_cast<std::size_t>((v - lo) / bin_width)] += 1;
  }
  return h;
}

/// Number of consecutive atom-number peaks 0, 1, 2, ... resolved in the
/// histogram: each needs a local maximum within a quarter unit of
/// background + k * unit and a valley below half of the smaller neighbour.
inline int resolved_level_peaks(const Histogram& h, double background, double unit, int max_atoms) {
  auto peak_near = [&](double x) -> std::optional<std::pair<std::size_t, std::size_t>> {
    std::optional<std::pair<std::size_t, std::size_t>> best;
    for (std::size_t i = 0; i < h.counts.size(); ++i)
      if (std::abs(h.center(i) - x) <= 0.25 * unit && h.counts[i] > 0 &&
          (!best || h.counts[i] > best->second))
        best = std::make_pair(i, h.counts[i]);
    return best;
  };
  int resolved = 0;
  auto previous = peak_near(background);
  if (!previous) return 0;
  resolved = 1;
  for (int k = 1; k <= max_atoms; ++k) {
    auto current = peak_near(background + k * unit);
    if (!current) break;
    std::size_t valley = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = previous->first; i <= current->first; ++i) valley = std::min(valley, h.counts[i]);
    if (2 * valley >= std::min(previous->second, current->second)) break;
    ++resolved;
    previous = current;
  }
  return resolved;
}

} // namespace cqed::analysis
