#pragma once

// Weighted nonlinear least squares (Levenberg-Marquardt) for the three line
// shapes used by the scan analyses. Models carry analytic Jacobians.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cqed/errors.hpp"
#include "cqed/format.hpp"

namespace cqed::analysis {

struct DataPoint {
  double x = 0.0;
  double y = 0.0;
  double sigma = 1.0;
};

enum class ModelKind { gaussian, lorentzian, linear };

inline std::string_view to_string(ModelKind m) {
  switch (m) {
  case ModelKind::gaussian: return "gaussian";
  case ModelKind::lorentzian: return "lorentzian";
  case ModelKind::linear: return "linear";
  }
  return "unknown";
}

/// A exp(-(x - x0)^2 / w_s^2) + B. With R proportional to g^2 and
/// g ~ exp(-rho^2/w^2), a transverse scan gives w_s = w / sqrt(2).
struct GaussianModel {
  static constexpr int n_params = 4;
  static constexpr ModelKind kind = ModelKind::gaussian;
  static constexpr std::array<std::string_view, 4> names{"A", "x0", "w_s", "B"};

  static double value(double x, const std::array<double, 4>& p) {
    const double u = (x - p[1]) / p[2];
    return p[0] * std::exp(-u * u) + p[3];
  }
  static std::array<double, 4> gradient(double x, const std::array<double, 4>& p) {
    const double d = x - p[1];
    const double w = p[2];
    const double e = std::exp(-d * d / (w * w));
    return {e, p[0] * e * 2.0 * d / (w * w), p[0] * e * 2.0 * d * d / (w * w * w), 1.0};
  }
};

/// A h^2 / ((x - x0)^2 + h^2) + B, h = HWHM.
struct LorentzianModel {
  static constexpr int n_params = 4;
  static constexpr ModelKind kind = ModelKind::lorentzian;
  static constexpr std::array<std::string_view, 4> names{"A", "x0", "h", "B"};

  static double value(double x, const std::array<double, 4>& p) {
    const double d = x - p[1];
    const double h2 = p[2] * p[2];
    return p[0] * h2 / (d * d + h2) + p[3];
  }
  static std::array<double, 4> gradient(double x, const std::array<double, 4>& p) {
    const double d = x - p[1];
    const double h = p[2];
    const double den = d * d + h * h;
    const double den2 = den * den;
    return {h * h / den, p[0] * h * h * 2.0 * d / den2, 2.0 * p[0] * h * d * d / den2, 1.0};
  }
};

/// m x + B
struct LinearModel {
  static constexpr int n_params = 2;
  static constexpr ModelKind kind = ModelKind::linear;
  static constexpr std::array<std::string_view, 2> names{"m", "B"};

  static double value(double x, const std::array<double, 2>& p) { return p[0] * x + p[1]; }
  static std::array<double, 2> gradient(double x, const std::array<double, 2>&) { return {x, 1.0}; }
};

struct FitOptions {
  int max_iterations = 200;
  double param_tolerance = 1e-8;
  double gradient_tolerance = 1e-10;
  double initial_lambda = 1e-3;
};

struct FitResult {
  ModelKind model = ModelKind::linear;
  std::vector<std::string> names;
  std::vector<double> params;
  std::vector<double> uncertainties;
  Eigen::MatrixXd covariance;
  double chi_square = 0.0;
  double residual_norm = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string message;
  /// Objective after each accepted step, starting with the initial guess.
  std::vector<double> chi_square_history;

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw InputError("fit result has no parameter '" + std::string(name) + "'");
  }
  double param(std::string_view name) const { return params[index_of(name)]; }
  double uncertainty(std::string_view name) const { return uncertainties[index_of(name)]; }
};

namespace detail {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;
template <int N>
using Mat = Eigen::Matrix<double, N, N>;

template <class Model>
struct Linearization {
  Mat<Model::n_params> normal;
  Vec<Model::n_params> gradient;
  double chi_square = 0.0;
};

template <class Model>
double chi_square(std::span<const DataPoint> data, const std::array<double, Model::n_params>& p) {
  double s = 0.0;
  for (const auto& d : data) {
    const double r = (d.y - Model::value(d.x, p)) / d.sigma;
    s += r * r;
  }
  return s;
}

template <class Model>
Linearization<Model> linearize(std::span<const DataPoint> data,
                               const std::array<double, Model::n_params>& p) {
  constexpr int N = Model::n_params;
  Linearization<Model> lin;
  lin.normal.setZero();
  lin.gradient.setZero();
  for (const auto& d : data) {
    const double r = (d.y - Model::value(d.x, p)) / d.sigma;
    const auto g = Model::gradient(d.x, p);
    Vec<N> j;
    for (int k = 0; k < N; ++k) j[k] = g[k] / d.sigma;
    lin.normal.noalias() += j * j.transpose();
    lin.gradient.noalias() += j * r;
    lin.chi_square += r * r;
  }
  return lin;
}

template <class Model>
void check_rank(std::span<const DataPoint> data, const std::array<double, Model::n_params>& p) {
  constexpr int N = Model::n_params;
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(data.size()), N);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto g = Model::gradient(data[i].x, p);
    for (int k = 0; k < N; ++k) jac(static_cast<Eigen::Index>(i), k) = g[k] / data[i].sigma;
  }
  // Scale columns so the rank test does not depend on parameter units.
  for (int k = 0; k < N; ++k) {
    const double n = jac.col(k).norm();
    if (n == 0.0 || !std::isfinite(n))
      throw DegenerateFitError("singular normal matrix: parameter has no effect on the model");
    jac.col(k) /= n;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jac);
  qr.setThreshold(1e-12);
  if (qr.rank() < N) throw DegenerateFitError("singular normal matrix: parameters are not identifiable");
}

} // namespace detail

template <class Model>
FitResult fit_least_squares(std::span<const DataPoint> data,
                            std::array<double, Model::n_params> guess, const FitOptions& opt = {}) {
  constexpr int N = Model::n_params;
  using Vec = detail::Vec<N>;
  using Mat = detail::Mat<N>;

  if (data.size() < static_cast<std::size_t>(N + 1))
    throw InputError("fit: need at least " + std::to_string(N + 1) + " points");
  for (const auto& d : data)
    if (!(d.sigma > 0.0) || !std::isfinite(d.x) || !std::isfinite(d.y))
      throw InputError("fit: sigma must be > 0 and data finite");
  detail::check_rank<Model>(data, guess);

  FitResult res;
  res.model = Model::kind;
  for (auto n : Model::names) res.names.emplace_back(n);

  auto p = guess;
  auto lin = detail::linearize<Model>(data, p);
  res.chi_square_history.push_back(lin.chi_square);
  double lambda = opt.initial_lambda;
  double data_norm = 0.0;
  for (const auto& d : data) data_norm += (d.y / d.sigma) * (d.y / d.sigma);

  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    res.gradient_norm = lin.gradient.norm();
    if (lin.chi_square <= 1e-24 * data_norm) {
      res.converged = true;
      res.message = "residual at working precision";
      break;
    }
    if (res.gradient_norm < opt.gradient_tolerance) {
      res.converged = true;
      res.message = "gradient norm below tolerance";
      break;
    }
    Mat damped = lin.normal;
    for (int k = 0; k < N; ++k) damped(k, k) += lambda * std::max(lin.normal(k, k), 1e-300);
    const Vec step = damped.ldlt().solve(lin.gradient);
    if (!step.allFinite()) throw DegenerateFitError("singular normal matrix during iteration");

    double rel = 0.0;
    std::array<double, N> trial = p;
    for (int k = 0; k < N; ++k) {
      trial[k] += step[k];
      rel = std::max(rel, std::abs(step[k]) / (std::abs(p[k]) + opt.param_tolerance));
    }
    const double trial_chi = detail::chi_square<Model>(data, trial);
    if (std::isfinite(trial_chi) && trial_chi <= lin.chi_square) {
      p = trial;
      lin = detail::linearize<Model>(data, p);
      res.chi_square_history.push_back(lin.chi_square);
      lambda = std::max(lambda / 10.0, 1e-12);
      if (rel < opt.param_tolerance) {
        res.converged = true;
        res.message = "relative parameter change below tolerance";
        ++it;
        break;
      }
    } else {
      lambda *= 10.0;
      if (rel < opt.param_tolerance) {
        // Rejected but negligible step: p is stationary to working precision.
        res.converged = true;
        res.message = "relative parameter change below tolerance";
        ++it;
        break;
      }
      if (lambda > 1e20) {
        res.message = "damping diverged";
        ++it;
        break;
      }
    }
  }
  if (!res.converged && res.message.empty()) res.message = "maximum iterations reached";
  res.iterations = it;
  res.gradient_norm = lin.gradient.norm();

  detail::check_rank<Model>(data, p);
  res.params.assign(p.begin(), p.end());
  res.chi_square = lin.chi_square;
  res.residual_norm = std::sqrt(lin.chi_square);
  const double dof = static_cast<double>(data.size()) - N;
  const Mat cov = lin.normal.inverse() * (lin.chi_square / dof);
  res.covariance = Eigen::MatrixXd(cov);
  res.covariance = 0.5 * (res.covariance + res.covariance.transpose()).eval();
  for (int k = 0; k < N; ++k) res.uncertainties.push_back(std::sqrt(std::max(cov(k, k), 0.0)));
  return res;
}

// ---------------------------------------------------------------------------
// Initial guesses from data moments.

namespace detail {
inline double edge_mean(std::span<const DataPoint> data, bool front) {
  const std::size_t n = std::max<std::size_t>(1, data.size() / 10);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += front ? data[i].y : data[data.size() - 1 - i].y;
  return s / static_cast<double>(n);
}
inline std::size_t argmax_y(std::span<const DataPoint> data) {
  return static_cast<std::size_t>(
      std::max_element(data.begin(), data.end(), [](auto& a, auto& b) { return a.y < b.y; }) -
      data.begin());
}
} // namespace detail

inline std::array<double, 4> guess_gaussian(std::span<const DataPoint> data) {
  const double base = 0.5 * (detail::edge_mean(data, true) + detail::edge_mean(data, false));
  const std::size_t peak = detail::argmax_y(data);
  double sw = 0.0, sx = 0.0;
  for (const auto& d : data) {
    const double w = std::max(d.y - base, 0.0);
    sw += w;
    sx += w * d.x;
  }
  const double x0 = sw > 0.0 ? sx / sw : data[peak].x;
  double sxx = 0.0;
  for (const auto& d : data) sxx += std::max(d.y - base, 0.0) * (d.x - x0) * (d.x - x0);
  double width = sw > 0.0 ? std::sqrt(2.0 * sxx / sw) : 0.0;
  if (!(width > 0.0)) width = 0.25 * std::abs(data.back().x - data.front().x);
  return {data[peak].y - base, x0, width, base};
}

inline std::array<double, 4> guess_lorentzian(std::span<const DataPoint> data) {
  const double base = std::min(detail::edge_mean(data, true), detail::edge_mean(data, false));
  const std::size_t peak = detail::argmax_y(data);
  const double amp = data[peak].y - base;
  const double half = base + 0.5 * amp;
  double hwhm = std::numeric_limits<double>::infinity();
  for (std::size_t i = peak; i < data.size(); ++i)
    if (data[i].y <= half) {
      hwhm = std::abs(data[i].x - data[peak].x);
      break;
    }
  for (std::size_t i = peak + 1; i-- > 0;)
    if (data[i].y <= half) {
      hwhm = std::min(hwhm, std::abs(data[peak].x - data[i].x));
      break;
    }
  if (!std::isfinite(hwhm) || hwhm == 0.0) hwhm = 0.25 * std::abs(data.back().x - data.front().x);
  return {amp, data[peak].x, hwhm, base};
}

inline std::array<double, 2> guess_linear(std::span<const DataPoint> data) {
  const auto& a = data.front();
  const auto& b = data.back();
  const double m = (b.x != a.x) ? (b.y - a.y) / (b.x - a.x) : 0.0;
  return {m, a.y - m * a.x};
}

/// Runtime dispatch over the model kinds; an empty guess uses the moment
/// estimate.
inline FitResult fit_least_squares(ModelKind model, std::span<const DataPoint> data,
                                   std::span<const double> guess = {}, const FitOptions& opt = {}) {
  if (data.empty()) throw InputError("fit: no data");
  auto take = [&]<std::size_t N>(std::array<double, N> fallback) {
    if (guess.empty()) return fallback;
    if (guess.size() != N) throw InputError("fit: initial guess has the wrong number of parameters");
    std::array<double, N> g;
    std::copy(guess.begin(), guess.end(), g.begin());
    return g;
  };
  switch (model) {
  case ModelKind::gaussian:
    return fit_least_squares<GaussianModel>(data, take(guess_gaussian(data)), opt);
  case ModelKind::lorentzian:
    return fit_least_squares<LorentzianModel>(data, take(guess_lorentzian(data)), opt);
  case ModelKind::linear:
    return fit_least_squares<LinearModel>(data, take(guess_linear(data)), opt);
  }
  throw InputError("fit: unknown model");
}

inline double model_value(ModelKind model, double x, std::span<const double> p) {
  switch (model) {
  case ModelKind::gaussian: return GaussianModel::value(x, {p[0], p[1], p[2], p[3]});
  case ModelKind::lorentzian: return LorentzianModel::value(x, {p[0], p[1], p[2], p[3]});
  case ModelKind::linear: return LinearModel::value(x, {p[0], p[1]});
  }
  return std::numeric_limits<double>::quiet_NaN();
}

/// Coefficient of determination of a fit against unweighted data.
inline double r_squared(const FitResult& fit, std::span<const DataPoint> data) {
  double mean = 0.0;
  for (const auto& d : data) mean += d.y;
  mean /= static_cast<double>(data.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (const auto& d : data) {
    const double f = model_value(fit.model, d.x, fit.params);
    ss_res += (d.y - f) * (d.y - f);
    ss_tot += (d.y - mean) * (d.y - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

/// Flat key-value serialization: model, status, then value/sigma per parameter.
inline std::vector<std::pair<std::string, std::string>> to_key_values(const FitResult& fit) {
  std::vector<std::pair<std::string, std::string>> kv{
      {"model", std::string(to_string(fit.model))},
      {"converged", fit.converged ? "true" : "false"},
      {"iterations", std::to_string(fit.iterations)},
      {"chi_square", format_number(fit.chi_square)},
      {"residual_norm", format_number(fit.residual_norm)},
  };
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    kv.emplace_back(fit.names[i], format_number(fit.params[i]));
    kv.emplace_back(fit.names[i] + "_sigma", format_number(fit.uncertainties[i]));
  }
  return kv;
}

} // namespace cqed::analysis
