#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cqed/errors.hpp"
#include "cqed/format.hpp"
#include "cqed/scenario/config.hpp"

namespace cqed::scenario {

struct Metric {
  std::string name;
  double value = 0.0;
  double uncertainty = std::numeric_limits<double>::quiet_NaN();
  std::string unit;
};

struct ExpectationResult {
  Expectation expectation;
  double value = 0.0;
  bool pass = false;
};

/// An emitted file, held in memory until written.
struct Artifact {
  std::string name;
  std::string content;
};

struct ScenarioReport {
  ScenarioKind scenario = ScenarioKind::detuning_scan;
  std::string digest;
  std::uint64_t seed = 0;
  bool noise = true;
  std::vector<Metric> metrics;
  std::vector<ExpectationResult> expectations;
  /// Free-text remarks; they carry no numbers of their own.
  std::vector<std::string> notes;
  std::vector<Artifact> artifacts;

  const Metric* find(std::string_view name) const {
    for (const auto& m : metrics)
      if (m.name == name) return &m;
    return nullptr;
  }
  double value(std::string_view name) const {
    const auto* m = find(name);
    if (!m) throw InputError("report has no metric '" + std::string(name) + "'");
    return m->value;
  }
  bool expectations_met() const {
    for (const auto& e : expectations)
      if (!e.pass) return false;
    return true;
  }
  const Artifact* artifact(std::string_view name) const {
    for (const auto& a : artifacts)
      if (a.name == name) return &a;
    return nullptr;
  }
};

/// Minimal CSV builder; numbers go through format_number.
class Csv {
public:
  explicit Csv(std::initializer_list<std::string_view> header) {
    bool first = true;
    for (auto h : header) {
      os_ << (first ? "" : ",") << h;
      first = false;
    }
    os_ << '\n';
  }
  Csv& comment(std::string_view key, std::string_view value) {
    std::string body = os_.str();
    os_.str("");
    os_ << "# " << key << '=' << value << '\n' << body;
    return *this;
  }
  template <class... Fields>
  Csv& row(const Fields&... f) {
    bool first = true;
    ((os_ << (first ? "" : ",") << field(f), first = false), ...);
    os_ << '\n';
    return *this;
  }
  std::string str() const { return os_.str(); }

private:
  static std::string field(double v) { return format_number(v); }
  static std::string field(int v) { return std::to_string(v); }
  static std::string field(long v) { return std::to_string(v); }
  static std::string field(long long v) { return std::to_string(v); }
  static std::string field(unsigned long v) { return std::to_string(v); }
  static std::string field(unsigned long long v) { return std::to_string(v); }
  static std::string field(const std::string& s) { return s; }
  static std::string field(const char* s) { return s; }
  static std::string field(std::string_view s) { return std::string(s); }
  std::ostringstream os_;
};

inline std::string metrics_csv(const ScenarioReport& r) {
  Csv csv({"metric", "value", "uncertainty", "unit"});
  for (const auto& m : r.metrics) csv.row(m.name, m.value, m.uncertainty, m.unit);
  return csv.str();
}

inline std::string config_csv(const ScenarioConfig& cfg, const std::string& digest) {
  Csv csv({"key", "value", "unit", "provenance"});
  csv.row(std::string("digest"), digest, std::string(""), std::string("derived"));
  for (const auto& [key, v] : cfg.values) {
    const bool textual = v.dim == Dim::choice || v.dim == Dim::flag;
    csv.row(key, textual ? v.text : format_number(cfg.display(key)), v.display_unit, v.provenance);
  }
  return csv.str();
}

inline std::string expectations_csv(const ScenarioReport& r) {
  Csv csv({"metric", "lo", "hi", "value", "pass"});
  for (const auto& e : r.expectations)
    csv.row(e.expectation.metric, e.expectation.lo, e.expectation.hi, e.value, std::string(e.pass ? "PASS" : "FAIL"));
  return csv.str();
}

/// Checks configured [expect] ranges against the metrics.
inline void evaluate_expectations(ScenarioReport& r, const ScenarioConfig& cfg) {
  for (const auto& e : cfg.expectations) {
    const auto* m = r.find(e.metric);
    ExpectationResult res{e, m ? m->value : std::numeric_limits<double>::quiet_NaN(), false};
    res.pass = m && m->value >= e.lo && m->value <= e.hi;
    r.expectations.push_back(res);
  }
}

/// Human-readable summary. Every number it shows is also a field of one of
/// the emitted CSV files.
inline std::string render_report(const ScenarioReport& r, const ScenarioConfig& cfg) {
  std::ostringstream os;
  const std::string s(to_string(r.scenario));
  os << "scenario: " << s << '\n';
  os << "digest: " << r.digest << '\n';
  os << "noise: " << (r.noise ? "on" : "off") << '\n';
  os << "result: " << (r.expectations_met() ? "ok" : "expectation failed") << "\n\n";

  os << "metrics (" << s << "_metrics.csv)\n";
  for (const auto& m : r.metrics) {
    os << "  " << m.name << " = " << format_number(m.value);
    if (!std::isnan(m.uncertainty)) os << " +/- " << format_number(m.uncertainty);
    if (!m.unit.empty()) os << ' ' << m.unit;
    os << '\n';
  }
  if (!r.expectations.empty()) {
    os << "\nexpectations (" << s << "_expectations.csv)\n";
    for (const auto& e : r.expectations)
      os << "  " << (e.pass ? "PASS " : "FAIL ") << e.expectation.metric << " = " << format_number(e.value)
         << " in [ " << format_number(e.expectation.lo) << " , " << format_number(e.expectation.hi) << " ]\n";
  }
  if (!r.notes.empty()) {
    os << "\nnotes\n";
    for (const auto& n : r.notes) os << "  " << n << '\n';
  }
  os << "\nconfiguration (" << s << "_config.csv)\n";
  for (const auto& [key, v] : cfg.values) {
    const bool textual = v.dim == Dim::choice || v.dim == Dim::flag;
    os << "  " << key << " = " << (textual ? v.text : format_number(cfg.display(key)));
    if (!v.display_unit.empty()) os << ' ' << v.display_unit;
    os << "  [" << v.provenance << "]\n";
  }
  os << "\nfiles\n";
  for (const auto& a : r.artifacts) os << "  " << a.name << '\n';
  os << "  report.txt\n";
  return os.str();
}

/// Writes every artifact and report.txt into `dir`.
inline void write_outputs(const ScenarioReport& r, const ScenarioConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << content;
  };
  for (const auto& a : r.artifacts) put(a.name, a.content);
  put("report.txt", render_report(r, cfg));
}

} // namespace cqed::scenario
