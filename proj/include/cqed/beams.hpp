#pragma once

// Gaussian-beam propagation and calibrated optical-lattice trap models for
// the conveyor and loading lattices.

#include <cmath>
#include <string>
#include <string_view>

#include "cqed/errors.hpp"
#include "cqed/units.hpp"

namespace cqed {

struct GaussianBeam {
  double wavelength = 1064.0 * nm;
  double waist_at_focus = 34.0 * um;
  double power = 4.0;
  double focus_position = 0.0;

  void validate() const {
    if (!(wavelength > 0.0)) throw InputError("beam: wavelength must be > 0");
    if (!(waist_at_focus > 0.0)) throw InputError("beam: waist_at_focus must be > 0");
    if (!(power > 0.0)) throw InputError("beam: power must be > 0");
  }
  double rayleigh_range() const { return pi * waist_at_focus * waist_at_focus / wavelength; }
};

/// Lattice trap calibrated by one (depth, light shift) pair at the focus.
/// Depth is U/k_B in kelvin; the light shift scales linearly with depth.
struct LatticeTrap {
  GaussianBeam beam;
  double depth_at_focus = 1.0 * mK;
  double stark_shift_at_focus = angular_mhz(83.0);

  void validate() const {
    beam.validate();
    if (!(depth_at_focus > 0.0)) throw InputError("trap: depth_at_focus must be > 0");
  }
  /// rad/s per kelvin of trap depth.
  double stark_coefficient() const { return stark_shift_at_focus / depth_at_focus; }
};

inline LatticeTrap default_conveyor_trap() { return {}; }

inline LatticeTrap default_loading_trap() {
  LatticeTrap t;
  t.beam.waist_at_focus = 17.0 * um;
  t.beam.power = 1.0;
  return t;
}

/// w(z) = w0 sqrt(1 + ((z - z_f) / z_R)^2)
inline double beam_radius_at(const GaussianBeam& beam, double z) {
  const double u = (z - beam.focus_position) / beam.rayleigh_range();
  return beam.waist_at_focus * std::sqrt(1.0 + u * u);
}

/// U(z) = U0 (w0 / w(z))^2 at fixed power.
inline double trap_depth_at(const LatticeTrap& trap, double z) {
  const double u = (z - trap.beam.focus_position) / trap.beam.rayleigh_range();
  return trap.depth_at_focus / (1.0 + u * u);
}

inline double stark_shift_at(const LatticeTrap& trap, double z) {
  return trap.stark_coefficient() * trap_depth_at(trap, z);
}

enum class TransferStage { mot_to_lattice, mot_to_cavity };

struct TransferEfficiencies {
  double mot_to_lattice = 0.90;
  double mot_to_cavity = 0.80;

  void validate() const {
    for (double p : {mot_to_lattice, mot_to_cavity})
      if (!(p >= 0.0 && p <= 1.0)) throw InputError("transfer efficiency outside [0, 1]");
  }
};

inline double transfer_efficiency(const TransferEfficiencies& eff, TransferStage stage) {
  switch (stage) {
  case TransferStage::mot_to_lattice: return eff.mot_to_lattice;
  case TransferStage::mot_to_cavity: return eff.mot_to_cavity;
  }
  throw ConfigError("unknown transfer stage");
}

inline double transfer_efficiency(const TransferEfficiencies& eff, std::string_view stage) {
  if (stage == "mot_to_lattice") return transfer_efficiency(eff, TransferStage::mot_to_lattice);
  if (stage == "mot_to_cavity") return transfer_efficiency(eff, TransferStage::mot_to_cavity);
  throw ConfigError("unknown transfer stage '" + std::string(stage) + "'");
}

} // namespace cqed
