#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cqed/cavity.hpp"
#include "cqed/experiment.hpp"
#include "oracles.hpp"

using namespace cqed;

namespace {

CavityParams cavity() { return {}; }
AtomParams atom() { return {}; }

} // namespace

TEST(Coupling, AntinodeOnAxisIsG0) {
  EXPECT_DOUBLE_EQ(coupling_at(cavity(), atom(), {0.0, 0.0}), angular_mhz(17.0));
}

TEST(Coupling, NodeIsZero) {
  const double lambda = atom().transition_wavelength;
  EXPECT_NEAR(coupling_at(cavity(), atom(), {lambda / 4.0, 0.0}), 0.0, 1e-9 * cavity().g0);
}

TEST(Coupling, OneWaistOffAxis) {
  const auto c = cavity();
  EXPECT_NEAR(coupling_at(c, atom(), {0.0, c.mode_waist}), c.g0 * std::exp(-1.0), 1e-9 * c.g0);
}

TEST(Coupling, BoundedByG0) {
  std::mt19937_64 eng(11);
  std::uniform_real_distribution<double> z(-5e-6, 5e-6), rho(0.0, 80e-6);
  const auto c = cavity();
  for (int i = 0; i < 10000; ++i) EXPECT_LE(std::abs(coupling_at(c, atom(), {z(eng), rho(eng)})), c.g0);
}

TEST(ScatteringRate, ZeroCouplingGivesZero) {
  EXPECT_EQ(scattering_rate(cavity(), atom(), ProbeParams{}, 0.0, angular_mhz(83.0)), 0.0);
}

TEST(ScatteringRate, QuadraticInRabiFrequency) {
  ProbeParams p;
  const double r1 = scattering_rate(cavity(), atom(), p, cavity().g0, angular_mhz(83.0));
  p.rabi_frequency *= 2.0;
  const double r2 = scattering_rate(cavity(), atom(), p, cavity().g0, angular_mhz(83.0));
  EXPECT_NEAR(r2 / r1, 4.0, 1e-14);
}

TEST(ScatteringRate, PeakValueForDefaultParameters) {
  // Frozen from a 30-digit evaluation of the rate expression with
  // g = g0, Omega = 2pi 12 MHz, dA = 2pi 104.5 MHz, dC = 2pi 21.5 MHz.
  const double r = scattering_rate(cavity(), atom(), ProbeParams{}, cavity().g0, angular_mhz(83.0));
  EXPECT_NEAR(r, 653541.219900367, 1e-6);
}

TEST(ScatteringRate, TwoBeamSwitchDoublesRate) {
  const double a = scattering_rate(cavity(), atom(), ProbeParams{}, cavity().g0, 0.0, ProbeBeamSum::per_beam);
  const double b = scattering_rate(cavity(), atom(), ProbeParams{}, cavity().g0, 0.0, ProbeBeamSum::two_beams);
  EXPECT_NEAR(b / a, 2.0, 1e-14);
}

TEST(ScatteringRate, LorentzianInCavityDetuningWithHwhmKappa) {
  ProbeParams p;
  p.cavity_probe_detuning = 0.0;
  const double r0 = scattering_rate(cavity(), atom(), p, cavity().g0, angular_mhz(83.0));
  p.cavity_probe_detuning = cavity().kappa;
  const double rk = scattering_rate(cavity(), atom(), p, cavity().g0, angular_mhz(83.0));
  EXPECT_NEAR(rk / r0, 0.5, 1e-15);
}

TEST(ScatteringRate, TransverseProfileIsGaussianInRho) {
  const auto c = cavity();
  const double w = c.mode_waist;
  const double shift = angular_mhz(83.0);
  const double r0 = scattering_rate(c, atom(), ProbeParams{}, coupling_at(c, atom(), {0.0, 0.0}), shift);
  // log R(rho) - log R(0) = -2 rho^2 / w^2 at fixed light shift.
  for (double rho : {5e-6, 10e-6, 20e-6, 40e-6}) {
    const double r = scattering_rate(c, atom(), ProbeParams{}, coupling_at(c, atom(), {0.0, rho}), shift);
    EXPECT_NEAR(std::log(r / r0), -2.0 * rho * rho / (w * w), 1e-12);
  }
}

TEST(ScatteringRate, LinearInOmegaSquaredAndGSquared) {
  std::mt19937_64 eng(5);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int i = 0; i < 1000; ++i) {
    ProbeParams p;
    p.rabi_frequency = angular_mhz(u(eng));
    p.cavity_probe_detuning = angular_mhz(u(eng) - 5.0);
    const double g = angular_mhz(u(eng));
    const double s = u(eng);
    const double base = scattering_rate(cavity(), atom(), p, g, 0.0);
    EXPECT_NEAR(scattering_rate(cavity(), atom(), p, g * std::sqrt(s), 0.0) / base, s, 1e-12 * s);
    p.rabi_frequency *= std::sqrt(s);
    EXPECT_NEAR(scattering_rate(cavity(), atom(), p, g, 0.0) / base, s, 1e-12 * s);
  }
}

TEST(ScatteringRate, MatchesSingleExpressionOracle) {
  std::mt19937_64 eng(2024);
  std::uniform_real_distribution<double> pos(0.5, 50.0), sgn(-60.0, 60.0);
  for (int i = 0; i < 10000; ++i) {
    CavityParams c;
    AtomParams a;
    ProbeParams p;
    c.kappa = angular_mhz(pos(eng));
    a.gamma = angular_mhz(pos(eng));
    p.rabi_frequency = angular_mhz(pos(eng));
    p.cavity_probe_detuning = angular_mhz(sgn(eng));
    p.probe_atom_detuning_bare = angular_mhz(sgn(eng));
    const double g = angular_mhz(pos(eng));
    const double shift = angular_mhz(sgn(eng));
    const double got = scattering_rate(c, a, p, g, shift);
    const long double want = oracle::scatter_rate(c.kappa, g, p.rabi_frequency, p.cavity_probe_detuning,
                                                  static_cast<long double>(p.probe_atom_detuning_bare) + shift,
                                                  a.gamma);
    EXPECT_LE(std::abs(got - want) / want, 1e-12);
  }
}

TEST(DetectedRate, PublishedChain) {
  const DetectionChain chain{{0.5, 0.5, 0.5}, 0.0};
  EXPECT_EQ(detected_rate(2400.0e3, chain), 300.0e3);
}

TEST(DetectedRate, ZeroInZeroOut) { EXPECT_EQ(detected_rate(0.0, DetectionChain{{0.5, 0.5, 0.5}, 0.0}), 0.0); }

TEST(DetectedRate, IdentityChainPlusDarkFloor) {
  EXPECT_EQ(detected_rate(1000.0, DetectionChain{{1.0}, 40.0}), 1040.0);
  EXPECT_EQ(detected_rate(1234.5, DetectionChain{{1.0}, 0.0}), 1234.5);
}

TEST(DetectionChain, RejectsEfficiencyAboveOne) {
  EXPECT_THROW((DetectionChain{{0.5, 1.5}, 0.0}.validate()), InputError);
}

TEST(Cooperativity, PublishedParameters) { EXPECT_NEAR(cooperativity(cavity(), atom()), 13.7619047619, 1e-9); }

TEST(Cooperativity, UnityWhenG0SquaredEqualsKappaHalfGamma) {
  CavityParams c;
  AtomParams a;
  c.kappa = angular_mhz(4.0);
  a.gamma = angular_mhz(2.0);
  c.g0 = angular_mhz(2.0);
  EXPECT_NEAR(cooperativity(c, a), 1.0, 1e-15);
  c.g0 = 1e-9;
  EXPECT_LT(cooperativity(c, a), 1e-20);
}

TEST(EffectiveAxialCoupling, Models) {
  const auto c = cavity();
  const auto a = atom();
  EXPECT_DOUBLE_EQ(effective_axial_coupling(c, a, AxialModel::uniform_average), c.g0 / std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(effective_axial_coupling(c, a, AxialModel::fixed_z, 0.0), c.g0);
  EXPECT_NEAR(effective_axial_coupling(c, a, AxialModel::fixed_z, a.transition_wavelength / 8.0),
              c.g0 / std::sqrt(2.0), 1e-9 * c.g0);
}

TEST(Params, RejectNonPositive) {
  CavityParams c;
  c.kappa = -1.0;
  EXPECT_THROW(c.validate(), InputError);
  AtomParams a;
  a.gamma = 0.0;
  EXPECT_THROW(a.validate(), InputError);
  ProbeParams p;
  p.rabi_frequency = -1.0;
  EXPECT_THROW(p.validate(), InputError);
}
