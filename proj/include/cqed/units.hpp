#pragma once

#include <numbers>

namespace cqed {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// SI scale factors. Frequencies given as "X MHz" are linear; angular values
// carry an explicit 2*pi via angular_mhz().
inline constexpr double kHz = 1e3;
inline constexpr double MHz = 1e6;
inline constexpr double nm = 1e-9;
inline constexpr double um = 1e-6;
inline constexpr double mm = 1e-3;
inline constexpr double ms = 1e-3;
inline constexpr double mK = 1e-3;
inline constexpr double uK = 1e-6;
inline constexpr double nW = 1e-9;
inline constexpr double uW = 1e-6;

constexpr double angular_mhz(double linear_mhz) { return two_pi * linear_mhz * MHz; }
constexpr double to_linear_mhz(double angular) { return angular / (two_pi * MHz); }

} // namespace cqed
