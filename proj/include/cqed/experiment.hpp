#pragma once

#include <cmath>

#include "cqed/beams.hpp"
#include "cqed/cavity.hpp"

namespace cqed {

/// Complete physical parameter set of one experimental configuration.
/// Positions along the conveyor axis are measured from the cavity axis; the
/// conveyor axis crosses the cavity axis, so rho = |x|.
struct ExperimentParams {
  AtomParams atom;
  CavityParams cavity;
  ProbeParams probe;
  DetectionChain detection{{0.5, 0.5, 0.5}, 100.0};
  LatticeTrap conveyor = default_conveyor_trap();
  LatticeTrap loading = default_loading_trap();
  TransferEfficiencies transfer;
  AxialModel axial_model = AxialModel::uniform_average;
  double axial_z = 0.0;
  ProbeBeamSum probe_beams = ProbeBeamSum::per_beam;
  /// Phenomenological ratio of observed to predicted single-atom signal.
  double signal_reduction = 1.0 / 30.0;
  /// Distance from the MOT to the cavity along the conveyor.
  double mot_distance = 8.5 * mm;

  void validate() const {
    atom.validate();
    cavity.validate();
    probe.validate();
    detection.validate();
    conveyor.validate();
    loading.validate();
    transfer.validate();
    if (!(signal_reduction >= 0.0)) throw InputError("signal_reduction must be >= 0");
  }
};

/// Scattering rate into the cavity for one atom at conveyor coordinate x.
inline double scattering_rate_at(const ExperimentParams& p, double x) {
  const double rho = std::abs(x);
  const double r = rho / p.cavity.mode_waist;
  const double g = effective_axial_coupling(p.cavity, p.atom, p.axial_model, p.axial_z) * std::exp(-r * r);
  return scattering_rate(p.cavity, p.atom, p.probe, g, stark_shift_at(p.conveyor, x), p.probe_beams);
}

/// Detected counts/s from n atoms at x, including the dark floor.
inline double detected_rate_at(const ExperimentParams& p, double x, double n_atoms) {
  return detected_rate(n_atoms * p.signal_reduction * scattering_rate_at(p, x), p.detection);
}

} // namespace cqed
