#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cqed/beams.hpp"

using namespace cqed;

TEST(BeamRadius, FocusAndRayleighRange) {
  const GaussianBeam b;
  EXPECT_DOUBLE_EQ(beam_radius_at(b, 0.0), 34e-6);
  EXPECT_NEAR(beam_radius_at(b, b.rayleigh_range()), 34e-6 * std::sqrt(2.0), 1e-18);
}

TEST(BeamRadius, ConveyorAtMotDistance) {
  // z_R = pi w0^2 / lambda = 3.41323 mm; w(8.5 mm) = 91.2419 um (30-digit evaluation).
  const GaussianBeam b;
  EXPECT_NEAR(b.rayleigh_range(), 3.41323412363703e-3, 1e-15);
  EXPECT_NEAR(beam_radius_at(b, 8.5e-3), 91.2418855011077e-6, 1e-15);
}

TEST(TrapDepth, FocusRayleighAndMot) {
  const auto trap = default_conveyor_trap();
  EXPECT_DOUBLE_EQ(trap_depth_at(trap, 0.0), 1e-3);
  EXPECT_NEAR(trap_depth_at(trap, trap.beam.rayleigh_range()), 0.5e-3, 1e-15);
  EXPECT_NEAR(trap_depth_at(trap, 8.5e-3), 0.138857496641009e-3, 1e-15);
}

TEST(TrapDepth, SymmetricAndDecreasing) {
  auto trap = default_conveyor_trap();
  trap.beam.focus_position = 1e-3;
  double last = trap_depth_at(trap, 1e-3);
  for (double dz = 1e-5; dz < 20e-3; dz *= 1.3) {
    const double up = trap_depth_at(trap, 1e-3 + dz);
    EXPECT_DOUBLE_EQ(up, trap_depth_at(trap, 1e-3 - dz));
    EXPECT_LT(up, last);
    last = up;
  }
}

TEST(TrapDepth, PowerConservationAlongAxis) {
  const auto trap = default_conveyor_trap();
  const double ref = beam_radius_at(trap.beam, 0.0) * beam_radius_at(trap.beam, 0.0) * trap_depth_at(trap, 0.0);
  std::mt19937_64 eng(3);
  std::uniform_real_distribution<double> z(-20e-3, 20e-3);
  for (int i = 0; i < 1000; ++i) {
    const double x = z(eng);
    const double w = beam_radius_at(trap.beam, x);
    EXPECT_NEAR(w * w * trap_depth_at(trap, x) / ref, 1.0, 1e-12);
  }
}

TEST(StarkShift, CalibrationAndLinearity) {
  const auto trap = default_conveyor_trap();
  EXPECT_DOUBLE_EQ(stark_shift_at(trap, 0.0), angular_mhz(83.0));
  EXPECT_NEAR(stark_shift_at(trap, trap.beam.rayleigh_range()), angular_mhz(41.5), 1e-6);
  EXPECT_DOUBLE_EQ(trap.stark_coefficient() * 0.0, 0.0);
  std::mt19937_64 eng(4);
  std::uniform_real_distribution<double> z(-20e-3, 20e-3);
  for (int i = 0; i < 1000; ++i) {
    const double x = z(eng);
    EXPECT_NEAR(stark_shift_at(trap, x) / trap_depth_at(trap, x), trap.stark_coefficient(),
                1e-12 * trap.stark_coefficient());
  }
}

TEST(TransferEfficiency, DefaultsAndOverride) {
  TransferEfficiencies eff;
  EXPECT_EQ(transfer_efficiency(eff, TransferStage::mot_to_lattice), 0.90);
  EXPECT_EQ(transfer_efficiency(eff, "mot_to_cavity"), 0.80);
  eff.mot_to_cavity = 1.0;
  EXPECT_EQ(transfer_efficiency(eff, "mot_to_cavity"), 1.0);
  EXPECT_THROW(transfer_efficiency(eff, "cavity_to_mot"), ConfigError);
}

TEST(LoadingLattice, Defaults) {
  const auto t = default_loading_trap();
  EXPECT_EQ(t.beam.waist_at_focus, 17e-6);
  EXPECT_EQ(t.beam.power, 1.0);
  EXPECT_EQ(t.depth_at_focus, 1e-3);
}
