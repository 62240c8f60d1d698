#pragma once

// Optical conveyor: a 1-D lattice moving at v = df * lambda / 2 when the two
// counter-propagating beams differ in frequency by df. Frequency programs are
// piecewise linear in time, so positions are piecewise quadratic and are
// evaluated in closed form.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "cqed/errors.hpp"
#include "cqed/units.hpp"

namespace cqed {

/// Linear frequency-difference ramp. Frequencies in Hz (not angular).
struct RampSegment {
  double duration = 0.0;
  double detuning_start = 0.0;
  double detuning_end = 0.0;
};

struct TransportPlan {
  std::vector<RampSegment> segments;
  double start_position = 0.0;
  /// Constant systematic drift added on top of the programmed motion.
  double drift_speed = 0.0;
  double lattice_wavelength = 1064.0 * nm;

  void validate() const {
    if (!(lattice_wavelength > 0.0)) throw InputError("plan: lattice wavelength must be > 0");
    if (!std::isfinite(drift_speed)) throw InputError("plan: drift speed must be finite");
    for (const auto& s : segments)
      if (!(s.duration > 0.0)) throw InputError("plan: segment duration must be > 0");
  }

  double duration() const {
    double t = 0.0;
    for (const auto& s : segments) t += s.duration;
    return t;
  }
};

struct TrajectorySample {
  double t = 0.0;
  double position = 0.0;
  double velocity = 0.0;
};

class Trajectory {
public:
  Trajectory(std::vector<TrajectorySample> samples, double sample_interval)
      : samples_(std::move(samples)), sample_interval_(sample_interval) {
    if (samples_.empty()) throw InputError("trajectory: no samples");
  }

  const std::vector<TrajectorySample>& samples() const { return samples_; }
  double sample_interval() const { return sample_interval_; }
  double start_time() const { return samples_.front().t; }
  double end_time() const { return samples_.back().t; }

  /// Linear interpolation between samples; clamps outside the covered range.
  double position_at(double t) const {
    if (t <= samples_.front().t) return samples_.front().position;
    if (t >= samples_.back().t) return samples_.back().position;
    auto hi = std::upper_bound(samples_.begin(), samples_.end(), t,
                               [](double v, const TrajectorySample& s) { return v < s.t; });
    auto lo = hi - 1;
    const double f = (t - lo->t) / (hi->t - lo->t);
    return lo->position + f * (hi->position - lo->position);
  }

private:
  std::vector<TrajectorySample> samples_;
  double sample_interval_;
};

inline double velocity_from_detuning(double delta_f, double lattice_wavelength) {
  return delta_f * lattice_wavelength / 2.0;
}

/// Programmed frequency difference at time t (zero after the last segment).
inline double plan_detuning_at(const TransportPlan& plan, double t) {
  double t0 = 0.0;
  for (const auto& s : plan.segments) {
    if (t < t0 + s.duration) {
      const double tau = std::max(0.0, t - t0);
      return s.detuning_start + (s.detuning_end - s.detuning_start) * tau / s.duration;
    }
    t0 += s.duration;
  }
  return 0.0;
}

/// Closed-form position: start + drift t + (lambda/2) * integral of df.
inline double plan_position_at(const TransportPlan& plan, double t) {
  const double half_lambda = plan.lattice_wavelength / 2.0;
  double x = plan.start_position + plan.drift_speed * t;
  double t0 = 0.0;
  for (const auto& s : plan.segments) {
    if (t <= t0) break;
    const double tau = std::min(t - t0, s.duration);
    const double slope = (s.detuning_end - s.detuning_start) / s.duration;
    x += half_lambda * (s.detuning_start * tau + 0.5 * slope * tau * tau);
    t0 += s.duration;
  }
  return x;
}

inline double plan_velocity_at(const TransportPlan& plan, double t) {
  return plan.drift_speed + velocity_from_detuning(plan_detuning_at(plan, t), plan.lattice_wavelength);
}

/// Sample the plan every `sample_interval` up to max(plan duration, min_duration).
/// The end time is always included as the final sample.
inline Trajectory integrate_plan(const TransportPlan& plan, double sample_interval,
                                 double min_duration = 0.0) {
  if (!(sample_interval > 0.0)) throw InputError("integrate_plan: sample_interval must be > 0");
  plan.validate();
  const double total = std::max(plan.duration(), min_duration);
  const auto n_full = static_cast<std::size_t>(std::floor(total / sample_interval + 1e-9));
  std::vector<TrajectorySample> samples;
  samples.reserve(n_full + 2);
  for (std::size_t k = 0; k <= n_full; ++k) {
    const double t = static_cast<double>(k) * sample_interval;
    samples.push_back({t, plan_position_at(plan, t), plan_velocity_at(plan, t)});
  }
  if (total - samples.back().t > 1e-12 * std::max(total, 1.0))
    samples.push_back({total, plan_position_at(plan, total), plan_velocity_at(plan, total)});
  return Trajectory(std::move(samples), sample_interval);
}

/// Triangle-wave sweep centred on 0: starts at -amplitude and crosses the
/// centre once per pass at constant |v| = speed.
inline TransportPlan make_sweep_plan(double amplitude, double speed, int passes,
                                     double lattice_wavelength) {
  if (!(speed > 0.0)) throw InputError("sweep plan: speed must be > 0");
  if (!(amplitude > 0.0)) throw InputError("sweep plan: amplitude must be > 0");
  if (passes < 1) throw InputError("sweep plan: passes must be >= 1");
  TransportPlan plan;
  plan.lattice_wavelength = lattice_wavelength;
  plan.start_position = -amplitude;
  const double df = 2.0 * speed / lattice_wavelength;
  const double leg = 2.0 * amplitude / speed;
  for (int i = 0; i < passes; ++i) {
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    plan.segments.push_back({leg, sign * df, sign * df});
  }
  return plan;
}

/// Cruise at `cruise_detuning` then ramp linearly to rest, covering `distance`
/// (signed) in total; optionally hold at rest afterwards.
inline TransportPlan make_delivery_plan(double start_position, double distance,
                                        double cruise_detuning, double ramp_time,
                                        double hold_time, double lattice_wavelength) {
  if (!(cruise_detuning > 0.0)) throw InputError("delivery plan: cruise detuning must be > 0");
  if (!(ramp_time > 0.0)) throw InputError("delivery plan: ramp time must be > 0");
  const double v = velocity_from_detuning(cruise_detuning, lattice_wavelength);
  const double ramp_distance = 0.5 * v * ramp_time;
  const double cruise_distance = std::abs(distance) - ramp_distance;
  if (cruise_distance < 0.0) throw InputError("delivery plan: ramp longer than the transport distance");
  const double sign = distance < 0.0 ? -1.0 : 1.0;
  TransportPlan plan;
  plan.lattice_wavelength = lattice_wavelength;
  plan.start_position = start_position;
  if (cruise_distance > 0.0)
    plan.segments.push_back({cruise_distance / v, sign * cruise_detuning, sign * cruise_detuning});
  plan.segments.push_back({ramp_time, sign * cruise_detuning, 0.0});
  if (hold_time > 0.0) plan.segments.push_back({hold_time, 0.0, 0.0});
  return plan;
}

} // namespace cqed
