#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "cqed/analysis/fit.hpp"
#include "cqed/experiment.hpp"
#include "oracles.hpp"

using namespace cqed;
using namespace cqed::analysis;

namespace {

template <class Model>
void check_jacobian(std::mt19937_64& eng, std::array<double, Model::n_params> p, double x_scale) {
  std::uniform_real_distribution<double> ux(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double x = p[1] + ux(eng) * x_scale;
    const auto g = Model::gradient(x, p);
    for (int k = 0; k < Model::n_params; ++k) {
      const double h = 1e-6 * std::max(std::abs(p[k]), x_scale);
      auto hi = p, lo = p;
      hi[k] += h;
      lo[k] -= h;
      const double fd = (Model::value(x, hi) - Model::value(x, lo)) / (2.0 * h);
      const double scale = std::max(std::abs(g[k]), 1e-6 * std::abs(p[0]) / x_scale);
      EXPECT_LT(std::abs(fd - g[k]) / scale, 1e-6) << "param " << k << " x " << x;
    }
  }
}

std::vector<DataPoint> sample(auto model_value, double lo, double hi, int n, double sigma) {
  std::vector<DataPoint> d;
  for (int i = 0; i < n; ++i) {
    const double x = lo + (hi - lo) * i / (n - 1);
    d.push_back({x, model_value(x), sigma});
  }
  return d;
}

} // namespace

TEST(Jacobians, AgreeWithCentralDifferences) {
  std::mt19937_64 eng(17);
  check_jacobian<GaussianModel>(eng, {120.0, 3.0, 14.0, 5.0}, 14.0);
  check_jacobian<LorentzianModel>(eng, {80.0, -1.0, 7.0, 2.0}, 7.0);
  check_jacobian<LinearModel>(eng, {2.5, -4.0}, 10.0);
}

TEST(Fit, ExactDataAtExactGuessIsFixedPoint) {
  const std::array<double, 4> p{100.0, 2.0, 10.0, 3.0};
  const auto data = sample([&](double x) { return GaussianModel::value(x, p); }, -40, 40, 81, 1.0);
  const auto fit = fit_least_squares<GaussianModel>(data, p);
  EXPECT_TRUE(fit.converged);
  EXPECT_EQ(fit.residual_norm, 0.0);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(fit.params[k], p[k]);
}

TEST(Fit, LinearOnExactLineMatchesClosedForm) {
  std::vector<double> xs, ys;
  for (int i = 0; i < 30; ++i) {
    xs.push_back(0.3 * i + 0.1);
    ys.push_back(4.25 * xs.back() - 1.75);
  }
  std::vector<DataPoint> data;
  for (std::size_t i = 0; i < xs.size(); ++i) data.push_back({xs[i], ys[i], 1.0});
  const auto [m, b] = oracle::ols_line(xs, ys);
  const auto fit = fit_least_squares(ModelKind::linear, data, std::vector<double>{1.0, 0.0});
  EXPECT_TRUE(fit.converged);
  EXPECT_NEAR(fit.param("m"), m, 1e-12 * std::abs(m));
  EXPECT_NEAR(fit.param("B"), b, 1e-12 * std::abs(b));
}

TEST(Fit, NoisyGaussianCoverage) {
  const std::array<double, 4> truth{50.0, 0.0, 14.0, 4.0};
  const double sigma = 2.0;
  int covered = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 eng(1000 + t);
    std::normal_distribution<double> noise(0.0, sigma);
    auto data = sample([&](double x) { return GaussianModel::value(x, truth); }, -50, 50, 101, sigma);
    for (auto& d : data) d.y += noise(eng);
    const auto fit = fit_least_squares(ModelKind::gaussian, data);
    bool ok = fit.converged;
    for (int k = 0; k < 4; ++k) ok = ok && std::abs(fit.params[k] - truth[k]) <= 3.0 * fit.uncertainties[k];
    covered += ok;
  }
  EXPECT_GE(covered, 950);
}

TEST(Fit, ObjectiveNeverIncreases) {
  std::mt19937_64 eng(5);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::array<double, 4> truth{30.0, 1.0, 6.0, 2.0};
  auto data = sample([&](double x) { return LorentzianModel::value(x, truth); }, -30, 30, 61, 1.0);
  for (auto& d : data) d.y += noise(eng);
  const auto fit = fit_least_squares<LorentzianModel>(data, {10.0, 5.0, 15.0, 0.0});
  ASSERT_TRUE(fit.converged);
  for (std::size_t i = 1; i < fit.chi_square_history.size(); ++i)
    EXPECT_LE(fit.chi_square_history[i], fit.chi_square_history[i - 1]);
  EXPECT_GT(fit.chi_square_history.size(), 2u);
}

TEST(Fit, CovarianceSymmetricPositiveSemidefinite) {
  std::mt19937_64 eng(6);
  std::normal_distribution<double> noise(0.0, 0.5);
  const std::array<double, 4> truth{20.0, -2.0, 8.0, 1.0};
  auto data = sample([&](double x) { return GaussianModel::value(x, truth); }, -30, 30, 61, 0.5);
  for (auto& d : data) d.y += noise(eng);
  const auto fit = fit_least_squares(ModelKind::gaussian, data);
  EXPECT_LT((fit.covariance - fit.covariance.transpose()).norm(), 1e-15 * fit.covariance.norm());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.covariance);
  EXPECT_GE(es.eigenvalues().minCoeff(), 0.0);
  for (double u : fit.uncertainties) EXPECT_GE(u, 0.0);
}

TEST(Fit, DegenerateDesignThrows) {
  std::vector<DataPoint> data(10, DataPoint{1.0, 2.0, 1.0});
  EXPECT_THROW(fit_least_squares(ModelKind::linear, data), DegenerateFitError);
  // Zero amplitude leaves centre and width unidentifiable.
  const auto flat = sample([](double) { return 3.0; }, -5, 5, 21, 1.0);
  EXPECT_THROW(fit_least_squares<GaussianModel>(flat, {0.0, 0.0, 1.0, 3.0}), DegenerateFitError);
}

TEST(Fit, InputValidation) {
  std::vector<DataPoint> two{{0, 0, 1}, {1, 1, 1}};
  EXPECT_THROW(fit_least_squares(ModelKind::linear, two), InputError);
  std::vector<DataPoint> bad{{0, 0, 1}, {1, 1, 0.0}, {2, 2, 1}};
  EXPECT_THROW(fit_least_squares(ModelKind::linear, bad), InputError);
}

TEST(Fit, IterationCapReportsNonConvergence) {
  const std::array<double, 4> truth{30.0, 1.0, 6.0, 2.0};
  const auto data = sample([&](double x) { return GaussianModel::value(x, truth); }, -30, 30, 61, 1.0);
  FitOptions opt;
  opt.max_iterations = 2;
  const auto fit = fit_least_squares<GaussianModel>(data, {10.0, 8.0, 15.0, 0.0}, opt);
  EXPECT_FALSE(fit.converged);
  EXPECT_EQ(fit.iterations, 2);
  EXPECT_EQ(fit.message, "maximum iterations reached");
}

TEST(Fit, KeyValueSerialization) {
  const auto data = sample([](double x) { return 2.0 * x + 1.0; }, 0, 10, 11, 1.0);
  const auto kv = to_key_values(fit_least_squares(ModelKind::linear, data));
  EXPECT_EQ(kv.front().first, "model");
  EXPECT_EQ(kv.front().second, "linear");
  bool have_m = false;
  for (auto& [k, v] : kv) have_m |= (k == "m" && v == "2");
  EXPECT_TRUE(have_m);
}

TEST(ConsistencyLoop, TransverseProfileGivesWaistOverRootTwo) {
  ExperimentParams p;
  std::vector<DataPoint> data;
  for (int i = -80; i <= 80; ++i) {
    const double x = i * 0.75e-6;
    data.push_back({x / 1e-6, scattering_rate_at(p, x) * 1e-3, 1.0});
  }
  const auto fit = fit_least_squares(ModelKind::gaussian, data);
  ASSERT_TRUE(fit.converged);
  const double expected = p.cavity.mode_waist / std::sqrt(2.0) / 1e-6;
  EXPECT_LT(std::abs(fit.param("w_s") - expected) / expected, 1e-3);
}

TEST(ConsistencyLoop, DetuningProfileGivesKappa) {
  ExperimentParams p;
  std::vector<DataPoint> data;
  for (int i = 0; i <= 40; ++i) {
    p.probe.cavity_probe_detuning = angular_mhz(-20.0 + i);
    data.push_back({-20.0 + i, scattering_rate_at(p, 0.0) * 1e-3, 1.0});
  }
  const auto fit = fit_least_squares(ModelKind::lorentzian, data);
  ASSERT_TRUE(fit.converged);
  EXPECT_LT(std::abs(fit.param("h") - 7.0) / 7.0, 1e-3);
  EXPECT_NEAR(fit.param("x0"), 0.0, 1e-6);
}
