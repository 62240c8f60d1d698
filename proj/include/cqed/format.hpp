#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace cqed {

/// Locale-independent shortest-ish decimal used for every emitted number so
/// reports and CSV files agree byte for byte.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

} // namespace cqed
