#pragma once

// Stochastic generators: inhomogeneous Poisson photon counting, atom loss,
// MOT birth-death fluorescence traces. Every generator draws only from the
// RngStream it is handed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cqed/conveyor.hpp"
#include "cqed/count_trace.hpp"
#include "cqed/errors.hpp"
#include "cqed/experiment.hpp"
#include "cqed/format.hpp"
#include "cqed/rng.hpp"

namespace cqed {

inline constexpr int kRateSubsteps = 8;

inline std::size_t bin_count(double duration, double bin_width) {
  if (!(bin_width > 0.0)) throw InputError("bin_width must be > 0");
  if (!(duration > 0.0)) throw InputError("duration must be > 0");
  const auto n = static_cast<std::size_t>(std::floor(duration / bin_width + 1e-9));
  return std::max<std::size_t>(n, 1);
}

/// Mean counts per bin: midpoint rule with `substeps` sub-intervals per bin.
template <class RateFn>
std::vector<double> integrate_rate(RateFn&& rate_fn, double t0, double duration, double bin_width,
                                   int substeps = kRateSubsteps) {
  const std::size_t n = bin_count(duration, bin_width);
  const double h = bin_width / substeps;
  std::vector<double> means(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double start = t0 + static_cast<double>(i) * bin_width;
    double acc = 0.0;
    for (int k = 0; k < substeps; ++k) {
      const double t = start + (k + 0.5) * h;
      const double r = rate_fn(t);
      if (!(r >= 0.0)) throw ModelError("negative or invalid rate " + format_number(r) + " at t=" + format_number(t) + " s");
      acc += r;
    }
    means[i] = acc * h;
  }
  return means;
}

/// Noise-free counterpart of a count trace: rate at each bin centre times the
/// bin width.
template <class RateFn>
std::vector<double> expected_counts(RateFn&& rate_fn, double t0, double duration, double bin_width) {
  const std::size_t n = bin_count(duration, bin_width);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = t0 + (static_cast<double>(i) + 0.5) * bin_width;
    const double r = rate_fn(t);
    if (!(r >= 0.0)) throw ModelError("negative or invalid rate " + format_number(r) + " at t=" + format_number(t) + " s");
    out[i] = r * bin_width;
  }
  return out;
}

template <class RateFn>
CountTrace sample_poisson_counts(RateFn&& rate_fn, double duration, double bin_width, RngStream& rng,
                                 double t0 = 0.0) {
  const auto means = integrate_rate(rate_fn, t0, duration, bin_width);
  CountTrace trace;
  trace.bin_width = bin_width;
  trace.t0 = t0;
  trace.seed = rng.seed();
  trace.counts.reserve(means.size());
  for (double m : means) trace.counts.push_back(rng.poisson(m));
  return trace;
}

// ---------------------------------------------------------------------------
// Atom loss

struct LossModel {
  double cooling_lifetime = 15.0;
  double heating_lifetime = 5e-3;
  /// Per-atom lifetime while n atoms share the cavity; the entry with the
  /// largest key <= n applies, otherwise cooling_lifetime.
  std::map<int, double> multiatom_lifetime_map{{4, 0.8}};

  void validate() const {
    if (!(cooling_lifetime > 0.0) || !(heating_lifetime > 0.0))
      throw InputError("loss model: lifetimes must be > 0");
    for (const auto& [n, tau] : multiatom_lifetime_map)
      if (n < 1 || !(tau > 0.0)) throw InputError("loss model: invalid multi-atom lifetime entry");
  }

  static LossModel disabled() {
    const double inf = std::numeric_limits<double>::infinity();
    return {inf, inf, {}};
  }
};

struct LossCondition {
  /// Sign of Delta_C; negative detunings heat.
  bool heating = false;
  int n_atoms = 1;
};

inline double lifetime_for(const LossModel& loss, const LossCondition& cond) {
  if (cond.heating) return loss.heating_lifetime;
  auto it = loss.multiatom_lifetime_map.upper_bound(cond.n_atoms);
  if (it == loss.multiatom_lifetime_map.begin()) return loss.cooling_lifetime;
  return std::prev(it)->second;
}

/// Loss time of one atom within [0, duration), or nullopt if it survives.
inline std::optional<double> sample_survival(const LossModel& loss, const LossCondition& cond,
                                             double duration, RngStream& rng) {
  const double tau = lifetime_for(loss, cond);
  if (std::isinf(tau)) return std::nullopt;
  const double t = rng.exponential(1.0 / tau);
  if (t < duration) return t;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Cavity emission

struct RunWindow {
  double t_start = 0.0;
  double duration = 1.0;
  double bin_width = 1e-3;
};

struct CavityRun {
  CountTrace trace;
  /// Absolute times at which atoms were lost, ascending.
  std::vector<double> loss_times;
  int n_atoms = 0;

  int atoms_at(double t) const {
    int lost = 0;
    for (double lt : loss_times)
      if (lt <= t) ++lost;
    return n_atoms - lost;
  }
};

/// Draws the loss times of n atoms held in the cavity from t_start on.
inline std::vector<double> sample_loss_times(const LossModel& loss, bool heating, int n_atoms,
                                             double t_start, double duration, RngStream& rng) {
  std::vector<double> out;
  double t = t_start;
  for (int k = n_atoms; k > 0; --k) {
    const double remaining = t_start + duration - t;
    std::optional<double> first;
    for (int i = 0; i < k; ++i) {
      auto s = sample_survival(loss, {heating, k}, remaining, rng);
      if (s && (!first || *s < *first)) first = s;
    }
    if (!first) break;
    t += *first;
    out.push_back(t);
  }
  return out;
}

/// Detected emission of `n_atoms` riding the trajectory with the probe on
/// during the window. Losses start at window.t_start.
inline CavityRun simulate_cavity_run(const ExperimentParams& params, const Trajectory& trajectory,
                                     const LossModel& loss, int n_atoms, RngStream& rng,
                                     const RunWindow& window) {
  if (n_atoms < 0) throw InputError("simulate_cavity_run: n_atoms must be >= 0");
  if (window.t_start < trajectory.start_time() - 1e-12 ||
      window.t_start + window.duration > trajectory.end_time() + 1e-9)
    throw InputError("simulate_cavity_run: trajectory does not cover the requested window");
  CavityRun run;
  run.n_atoms = n_atoms;
  const bool heating = params.probe.cavity_probe_detuning < 0.0;
  run.loss_times = sample_loss_times(loss, heating, n_atoms, window.t_start, window.duration, rng);
  auto rate = [&](double t) {
    return detected_rate_at(params, trajectory.position_at(t), run.atoms_at(t));
  };
  run.trace = sample_poisson_counts(rate, window.duration, window.bin_width, rng, window.t_start);
  return run;
}

/// Noise-free emission: no losses, rate sampled at bin centres.
inline std::vector<double> expected_cavity_counts(const ExperimentParams& params,
                                                  const Trajectory& trajectory, int n_atoms,
                                                  const RunWindow& window) {
  auto rate = [&](double t) { return detected_rate_at(params, trajectory.position_at(t), n_atoms); };
  return expected_counts(rate, window.t_start, window.duration, window.bin_width);
}

// ---------------------------------------------------------------------------
// MOT fluorescence

struct MotModel {
  double loading_rate = 0.025;
  double per_atom_loss_rate = 0.01;
  double fluorescence_per_atom = 4000.0;
  double background_rate = 35600.0;
  double read_noise_sigma = 100.0;
  int initial_atoms = 0;

  void validate() const {
    if (!(loading_rate >= 0.0) || !(per_atom_loss_rate >= 0.0) || !(fluorescence_per_atom >= 0.0) ||
        !(background_rate >= 0.0) || !(read_noise_sigma >= 0.0) || initial_atoms < 0)
      throw InputError("mot model: parameters must be >= 0");
  }
};

struct MotRun {
  CountTrace trace;
  /// Atom number present for the larger part of each bin.
  std::vector<int> true_atoms;
  /// Time-averaged atom number per bin.
  std::vector<double> mean_atoms;
  /// (time, atom number after the event)
  std::vector<std::pair<double, int>> events;
};

/// Birth-death atom number (Poisson loading, independent exponential loss),
/// camera signal = Poisson shot noise + Gaussian read noise, rounded and
/// clamped at zero. With noise off the signal is the rounded expectation.
inline MotRun simulate_mot_trace(const MotModel& mot, double duration, double bin_width,
                                 RngStream& rng, bool noise = true) {
  mot.validate();
  const std::size_t n_bins = bin_count(duration, bin_width);
  const double t_end = static_cast<double>(n_bins) * bin_width;

  MotRun run;
  int n = mot.initial_atoms;
  double t = 0.0;
  std::vector<std::pair<double, int>> timeline{{0.0, n}};
  while (true) {
    const double total = mot.loading_rate + n * mot.per_atom_loss_rate;
    if (!(total > 0.0)) break;
    t += rng.exponential(total);
    if (t >= t_end) break;
    if (rng.uniform() * total < mot.loading_rate) ++n;
    else --n;
    timeline.emplace_back(t, n);
  }
  run.events.assign(timeline.begin() + 1, timeline.end());

  run.trace.bin_width = bin_width;
  run.trace.seed = rng.seed();
  run.trace.counts.resize(n_bins);
  run.true_atoms.resize(n_bins);
  run.mean_atoms.resize(n_bins);
  std::size_t seg = 0;
  for (std::size_t i = 0; i < n_bins; ++i) {
    const double a = static_cast<double>(i) * bin_width;
    const double b = a + bin_width;
    while (seg + 1 < timeline.size() && timeline[seg + 1].first <= a) ++seg;
    double weighted = 0.0;
    std::map<int, double> occupancy;
    for (std::size_t k = seg; k < timeline.size() && timeline[k].first < b; ++k) {
      const double lo = std::max(a, timeline[k].first);
      const double hi = (k + 1 < timeline.size()) ? std::min(b, timeline[k + 1].first) : b;
      if (hi <= lo) continue;
      weighted += timeline[k].second * (hi - lo);
      occupancy[timeline[k].second] += hi - lo;
    }
    run.mean_atoms[i] = weighted / bin_width;
    run.true_atoms[i] = std::max_element(occupancy.begin(), occupancy.end(), [](auto& l, auto& r) {
                          return l.second < r.second;
                        })->first;

    const double mean = (run.mean_atoms[i] * mot.fluorescence_per_atom + mot.background_rate) * bin_width;
    double signal = mean;
    if (noise) {
      signal = static_cast<double>(rng.poisson(mean));
      if (mot.read_noise_sigma > 0.0) signal += rng.normal(0.0, mot.read_noise_sigma);
    }
    run.trace.counts[i] = std::max<std::int64_t>(0, std::llround(signal));
  }
  return run;
}

} // namespace cqed
