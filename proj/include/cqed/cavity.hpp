#pragma once

// Closed-form cavity-QED quantities for a single two-level atom in a
// Fabry-Perot TEM00 mode: position-dependent coupling, the cavity scattering
// rate, cooperativity and the photon detection chain.
//
// All frequencies are angular (rad/s). Rates are in 1/s.

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "cqed/errors.hpp"
#include "cqed/units.hpp"

namespace cqed {

struct AtomParams {
  double transition_wavelength = 780.0 * nm;
  /// Full natural linewidth of the transition (not gamma/2).
  double gamma = angular_mhz(6.0);
  std::string hyperfine_label = "87Rb D2 F=2 -> F'=3";

  void validate() const {
    if (!(transition_wavelength > 0.0)) throw InputError("atom: transition_wavelength must be > 0");
    if (!(gamma > 0.0)) throw InputError("atom: gamma must be > 0");
  }
  double wavenumber() const { return two_pi / transition_wavelength; }
};

struct CavityParams {
  double g0 = angular_mhz(17.0);
  /// Cavity field decay rate (HWHM of the transmission line).
  double kappa = angular_mhz(7.0);
  double mode_waist = 20.0 * um;
  double cavity_length = 222.0 * um;
  double total_losses_ppm = 130.0;

  void validate() const {
    if (!(g0 > 0.0)) throw InputError("cavity: g0 must be > 0");
    if (!(kappa > 0.0)) throw InputError("cavity: kappa must be > 0");
    if (!(mode_waist > 0.0)) throw InputError("cavity: mode_waist must be > 0");
    if (!(cavity_length > 0.0)) throw InputError("cavity: cavity_length must be > 0");
  }
};

struct ProbeParams {
  /// Rabi frequency per probe beam.
  double rabi_frequency = angular_mhz(12.0);
  /// omega_0 - omega_p without light shifts; positive for a red-detuned probe.
  double probe_atom_detuning_bare = angular_mhz(21.5);
  /// Delta_C = omega_c - omega_p; positive values cool.
  double cavity_probe_detuning = angular_mhz(21.5);

  void validate() const {
    if (!(rabi_frequency >= 0.0)) throw InputError("probe: rabi_frequency must be >= 0");
  }
};

struct DetectionChain {
  std::vector<double> stage_efficiencies{0.5, 0.5, 0.5};
  double dark_count_rate = 0.0;

  void validate() const {
    for (double e : stage_efficiencies)
      if (!(e >= 0.0 && e <= 1.0)) throw InputError("detection: stage efficiency outside [0, 1]");
    if (!(dark_count_rate >= 0.0)) throw InputError("detection: dark_count_rate must be >= 0");
  }
  double total_efficiency() const {
    return std::accumulate(stage_efficiencies.begin(), stage_efficiencies.end(), 1.0,
                           std::multiplies<>());
  }
};

/// Cylindrical coordinates relative to the cavity mode: z along the cavity
/// axis, rho the transverse distance from it.
struct Position {
  double z = 0.0;
  double rho = 0.0;
};

enum class AxialModel { fixed_z, uniform_average };

/// How the two counter-propagating probe beams enter the Omega^2 factor.
enum class ProbeBeamSum { per_beam, two_beams };

/// g(r) = g0 cos(k z) exp(-rho^2 / w^2)
inline double coupling_at(const CavityParams& cavity, const AtomParams& atom, const Position& pos) {
  const double r = pos.rho / cavity.mode_waist;
  return cavity.g0 * std::cos(atom.wavenumber() * pos.z) * std::exp(-r * r);
}

/// Rate of photon scattering into the cavity mode,
///   R = 2 kappa g^2 / (dC^2 + kappa^2) * Omega^2 / (dA^2 + gamma^2)
/// with dA = bare probe-atom detuning + light shift.
inline double scattering_rate(const CavityParams& cavity, const AtomParams& atom,
                              const ProbeParams& probe, double g, double stark_shift,
                              ProbeBeamSum beams = ProbeBeamSum::per_beam) {
  const double kappa = cavity.kappa;
  const double dc = probe.cavity_probe_detuning;
  const double da = probe.probe_atom_detuning_bare + stark_shift;
  double omega_sq = probe.rabi_frequency * probe.rabi_frequency;
  if (beams == ProbeBeamSum::two_beams) omega_sq *= 2.0;
  const double cavity_factor = g * g / (dc * dc + kappa * kappa);
  const double atom_factor = omega_sq / (da * da + atom.gamma * atom.gamma);
  return 2.0 * kappa * cavity_factor * atom_factor;
}

inline double detected_rate(double scatter_rate, const DetectionChain& chain) {
  return chain.total_efficiency() * scatter_rate + chain.dark_count_rate;
}

/// C = g0^2 / (kappa * gamma/2)
inline double cooperativity(const CavityParams& cavity, const AtomParams& atom) {
  return cavity.g0 * cavity.g0 / (cavity.kappa * 0.5 * atom.gamma);
}

/// Coupling on the cavity axis (rho = 0). The conveyor lattice period is
/// incommensurate with the cavity standing wave, so the default averages
/// g^2 over z, giving the rms value g0/sqrt(2).
inline double effective_axial_coupling(const CavityParams& cavity, const AtomParams& atom,
                                       AxialModel model, double fixed_z = 0.0) {
  if (model == AxialModel::uniform_average) return cavity.g0 / std::sqrt(2.0);
  return coupling_at(cavity, atom, Position{fixed_z, 0.0});
}

} // namespace cqed
