#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cqed/errors.hpp"
#include "cqed/format.hpp"

namespace cqed {

/// Time-binned detector counts (APD or camera).
struct CountTrace {
  double bin_width = 1e-3;
  double t0 = 0.0;
  std::vector<std::int64_t> counts;
  std::uint64_t seed = 0;
  std::string scenario_id;

  std::size_t size() const { return counts.size(); }
  double bin_start(std::size_t i) const { return t0 + static_cast<double>(i) * bin_width; }
  double bin_center(std::size_t i) const { return bin_start(i) + 0.5 * bin_width; }

  std::vector<double> as_doubles() const { return {counts.begin(), counts.end()}; }

  std::int64_t total() const {
    std::int64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

inline void write_csv(std::ostream& os, const CountTrace& trace) {
  os << "# bin_width_s=" << format_number(trace.bin_width) << '\n';
  os << "# seed=" << trace.seed << '\n';
  os << "# scenario=" << trace.scenario_id << '\n';
  os << "t_start_s,counts\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    os << format_number(trace.bin_start(i)) << ',' << trace.counts[i] << '\n';
}

inline CountTrace read_csv(std::istream& is) {
  CountTrace trace;
  std::string line;
  bool have_header = false;
  bool have_width = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      const std::string value = line.substr(eq + 1);
      if (key == "bin_width_s") {
        trace.bin_width = std::stod(value);
        have_width = true;
      } else if (key == "seed") {
        trace.seed = std::stoull(value);
      } else if (key == "scenario") {
        trace.scenario_id = value;
      }
      continue;
    }
    if (!have_header) {
      if (line != "t_start_s,counts") throw InputError("count trace csv: unexpected header '" + line + "'");
      have_header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InputError("count trace csv: malformed row '" + line + "'");
    if (trace.counts.empty()) trace.t0 = std::stod(line.substr(0, comma));
    const long long c = std::stoll(line.substr(comma + 1));
    if (c < 0) throw InputError("count trace csv: negative count");
    trace.counts.push_back(c);
  }
  if (!have_width) throw InputError("count trace csv: missing bin_width_s");
  if (trace.counts.empty()) throw InputError("count trace csv: no rows");
  return trace;
}

} // namespace cqed
