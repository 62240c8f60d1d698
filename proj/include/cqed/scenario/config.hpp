#pragma once

// Scenario configuration: a sectioned key = value text format with explicit
// units, resolved against a schema of defaults.
//
//   scenario = detuning_scan
//   seed = 7
//
//   [cavity]
//   kappa = 7 MHz          # angular quantities are written as linear MHz
//
//   [expect]
//   hwhm = 6 .. 8
//
// Angular frequencies (couplings, linewidths, detunings, Rabi frequencies)
// are given as linear frequencies and stored as 2*pi*f. Conveyor frequency
// differences are plain frequencies.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cqed/errors.hpp"
#include "cqed/experiment.hpp"
#include "cqed/format.hpp"
#include "cqed/montecarlo.hpp"
#include "cqed/units.hpp"

namespace cqed::scenario {

enum class ScenarioKind {
  mot_counting,
  deliver_and_hold,
  transverse_scan,
  multipass_sweep,
  power_scan,
  detuning_scan,
  lifetime_study,
};

struct ScenarioInfo {
  ScenarioKind kind;
  std::string_view name;
  std::string_view summary;
};

inline constexpr ScenarioInfo kScenarios[] = {
    {ScenarioKind::mot_counting, "mot_counting", "MOT fluorescence trace, step fit and atom-number histogram"},
    {ScenarioKind::deliver_and_hold, "deliver_and_hold", "conveyor delivery into the cavity and probed hold"},
    {ScenarioKind::transverse_scan, "transverse_scan", "single sweep across the mode, averaged and Gaussian-fitted"},
    {ScenarioKind::multipass_sweep, "multipass_sweep", "repeated sweeps through the mode with peak counting"},
    {ScenarioKind::power_scan, "power_scan", "probe power ramp with linear fit above the dark floor"},
    {ScenarioKind::detuning_scan, "detuning_scan", "cavity detuning grid with Lorentzian fit"},
    {ScenarioKind::lifetime_study, "lifetime_study", "trap lifetime versus number of atoms in the cavity"},
};

inline std::string_view to_string(ScenarioKind k) {
  for (const auto& s : kScenarios)
    if (s.kind == k) return s.name;
  return "unknown";
}

inline std::optional<ScenarioKind> scenario_from_string(std::string_view name) {
  for (const auto& s : kScenarios)
    if (s.name == name) return s.kind;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Units

enum class Dim {
  angular,     // rad/s, written as linear Hz/kHz/MHz
  frequency,   // Hz
  length,      // m
  time,        // s
  power,       // W
  temperature, // K
  rate,        // 1/s
  speed,       // m/s
  fraction,    // [0, 1]
  ratio,       // dimensionless
  ppm,
  count,       // non-negative integer
  integer,
  choice,
  flag,
};

struct UnitFactor {
  std::string_view unit;
  double factor;
};

inline std::vector<UnitFactor> units_for(Dim d) {
  switch (d) {
  case Dim::angular: return {{"MHz", two_pi * MHz}, {"kHz", two_pi * kHz}, {"Hz", two_pi}};
  case Dim::frequency: return {{"MHz", MHz}, {"kHz", kHz}, {"Hz", 1.0}};
  case Dim::length: return {{"m", 1.0}, {"mm", mm}, {"um", um}, {"nm", nm}};
  case Dim::time: return {{"s", 1.0}, {"ms", ms}, {"us", 1e-6}};
  case Dim::power: return {{"W", 1.0}, {"mW", 1e-3}, {"uW", uW}, {"nW", nW}};
  case Dim::temperature: return {{"K", 1.0}, {"mK", mK}, {"uK", uK}};
  case Dim::rate: return {{"/s", 1.0}, {"/ms", 1e3}};
  case Dim::speed: return {{"m/s", 1.0}, {"cm/s", 1e-2}, {"mm/s", mm}, {"um/s", um}};
  case Dim::fraction: return {{"", 1.0}, {"%", 0.01}};
  case Dim::ppm: return {{"ppm", 1.0}};
  default: return {{"", 1.0}};
  }
}

inline std::string_view trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

/// Splits "12.5 MHz" / "12.5MHz" / "1/30" into number and unit and converts
/// to SI. Throws ConfigError with a short reason.
inline double parse_quantity(std::string_view text, Dim dim) {
  text = trim(text);
  std::size_t split = 0;
  while (split < text.size() && (std::isdigit(static_cast<unsigned char>(text[split])) || text[split] == '.' ||
                                 text[split] == '-' || text[split] == '+' || text[split] == 'e' ||
                                 text[split] == 'E' || (dim == Dim::fraction && text[split] == '/')))
    ++split;
  const std::string_view num = trim(text.substr(0, split));
  const std::string_view unit = trim(text.substr(split));
  std::optional<double> value;
  if (const auto slash = num.find('/'); dim == Dim::fraction && slash != std::string_view::npos) {
    const auto a = parse_double(num.substr(0, slash));
    const auto b = parse_double(num.substr(slash + 1));
    if (a && b && *b != 0.0) value = *a / *b;
  } else {
    value = parse_double(num);
  }
  if (!value) throw ConfigError("'" + std::string(text) + "' is not a number");
  for (const auto& u : units_for(dim))
    if (u.unit == unit) return *value * u.factor;
  std::string allowed;
  for (const auto& u : units_for(dim)) allowed += (allowed.empty() ? "" : ", ") + std::string(u.unit.empty() ? "<none>" : u.unit);
  if (unit.empty()) throw ConfigError("missing unit (expected one of " + allowed + ")");
  throw ConfigError("unit '" + std::string(unit) + "' not allowed here (expected one of " + allowed + ")");
}

// ---------------------------------------------------------------------------
// Schema

enum class Sign { positive, non_negative, any };

struct FieldSpec {
  std::string_view key;
  Dim dim;
  /// Default written in config syntax; empty means required.
  std::string_view default_text;
  /// Provenance of the default value.
  std::string_view provenance;
  /// Unit used when echoing the value.
  std::string_view display_unit;
  Sign sign = Sign::positive;
  /// Scenarios using this field; empty means all.
  std::vector<ScenarioKind> scenarios = {};
  /// Per-scenario default overrides.
  std::vector<std::pair<ScenarioKind, std::string_view>> scenario_defaults = {};
  /// Allowed values of a choice field.
  std::vector<std::string_view> choices = {};
  std::string_view help = "";
};

inline const std::vector<FieldSpec>& schema() {
  using K = ScenarioKind;
  static const std::vector<FieldSpec> s = {
      {"scenario", Dim::choice, "", "", "", Sign::any, {}, {}, {}, "scenario to run"},
      {"seed", Dim::integer, "1", "assumed", "", Sign::non_negative},
      {"repetitions", Dim::count, "10", "assumed", "", Sign::positive, {},
       {{K::transverse_scan, "17"}, {K::multipass_sweep, "20"}, {K::power_scan, "20"}, {K::lifetime_study, "200"}}},
      {"noise", Dim::flag, "on", "assumed", ""},

      {"atom.gamma", Dim::angular, "6 MHz", "measured", "MHz"},
      {"atom.wavelength", Dim::length, "780 nm", "measured", "nm"},

      {"cavity.g0", Dim::angular, "17 MHz", "measured", "MHz"},
      {"cavity.kappa", Dim::angular, "7 MHz", "measured", "MHz"},
      {"cavity.mode_waist", Dim::length, "20 um", "measured", "um"},
      {"cavity.length", Dim::length, "222 um", "measured", "um"},
      {"cavity.losses", Dim::ppm, "130 ppm", "measured", "ppm"},

      {"probe.rabi_frequency", Dim::angular, "12 MHz", "measured", "MHz"},
      {"probe.atom_detuning", Dim::angular, "21.5 MHz", "measured", "MHz", Sign::any},
      {"probe.cavity_detuning", Dim::angular, "21.5 MHz", "assumed", "MHz", Sign::any, {},
       {{K::power_scan, "12 MHz"}}},
      {"probe.beams", Dim::choice, "per_beam", "assumed", "", Sign::any, {}, {}, {"per_beam", "two_beams"}},

      {"coupling.axial_model", Dim::choice, "uniform_average", "assumed", "", Sign::any, {}, {},
       {"uniform_average", "fixed_z"}},
      {"coupling.axial_z", Dim::length, "0 nm", "assumed", "nm", Sign::any},

      {"detection.cavity_output", Dim::fraction, "0.5", "measured", ""},
      {"detection.path", Dim::fraction, "0.5", "measured", ""},
      {"detection.detector", Dim::fraction, "0.5", "measured", ""},
      {"detection.dark_rate", Dim::rate, "100 /s", "assumed", "/s", Sign::non_negative},

      {"model.signal_reduction", Dim::fraction, "1/30", "uncalibrated", "", Sign::non_negative, {},
       {{K::multipass_sweep, "1/10"}}},

      {"conveyor.wavelength", Dim::length, "1064 nm", "measured", "nm"},
      {"conveyor.waist", Dim::length, "34 um", "measured", "um"},
      {"conveyor.power", Dim::power, "4 W", "measured", "W"},
      {"conveyor.depth", Dim::temperature, "1 mK", "measured", "mK"},
      {"conveyor.stark_shift", Dim::angular, "83 MHz", "measured", "MHz", Sign::any},
      {"conveyor.drift_speed", Dim::speed, "0 um/s", "assumed", "um/s", Sign::any},
      {"conveyor.mot_distance", Dim::length, "8.5 mm", "measured", "mm"},

      {"loading.waist", Dim::length, "17 um", "measured", "um"},
      {"loading.power", Dim::power, "1 W", "measured", "W"},
      {"loading.depth", Dim::temperature, "1 mK", "assumed", "mK"},

      {"transfer.mot_to_lattice", Dim::fraction, "0.9", "measured", ""},
      {"transfer.mot_to_cavity", Dim::fraction, "0.8", "measured", ""},

      {"loss.cooling_lifetime", Dim::time, "15 s", "measured", "s"},
      {"loss.heating_lifetime", Dim::time, "5 ms", "assumed", "ms"},
      {"loss.multiatom.4", Dim::time, "0.8 s", "assumed", "s"},

      {"mot.loading_rate", Dim::rate, "0.025 /s", "uncalibrated", "/s", Sign::non_negative, {K::mot_counting}},
      {"mot.loss_rate", Dim::rate, "0.01 /s", "uncalibrated", "/s", Sign::non_negative, {K::mot_counting}},
      {"mot.fluorescence", Dim::rate, "4000 /s", "uncalibrated", "/s", Sign::non_negative, {K::mot_counting}},
      {"mot.background", Dim::rate, "35600 /s", "uncalibrated", "/s", Sign::non_negative, {K::mot_counting}},
      {"mot.read_noise", Dim::ratio, "100", "uncalibrated", "", Sign::non_negative, {K::mot_counting}},
      {"mot.duration", Dim::time, "500 s", "measured", "s", Sign::positive, {K::mot_counting}},
      {"mot.bin_width", Dim::time, "500 ms", "measured", "ms", Sign::positive, {K::mot_counting}},
      {"mot.histogram_atoms", Dim::count, "5", "measured", "", Sign::positive, {K::mot_counting}},

      {"sweep.speed", Dim::speed, "55 um/s", "measured", "um/s", Sign::positive,
       {K::transverse_scan, K::multipass_sweep}, {{K::multipass_sweep, "440 um/s"}}},
      {"sweep.amplitude", Dim::length, "60 um", "assumed", "um", Sign::positive,
       {K::transverse_scan, K::multipass_sweep}, {{K::multipass_sweep, "100 um"}}},
      {"sweep.passes", Dim::count, "1", "assumed", "", Sign::positive, {K::transverse_scan, K::multipass_sweep},
       {{K::multipass_sweep, "10"}}},
      {"sweep.bin_width", Dim::time, "20 ms", "assumed", "ms", Sign::positive,
       {K::transverse_scan, K::multipass_sweep}, {{K::multipass_sweep, "1 ms"}}},

      {"power.start", Dim::power, "24 nW", "measured", "nW", Sign::non_negative, {K::power_scan}},
      {"power.end", Dim::power, "24 uW", "measured", "uW", Sign::positive, {K::power_scan}},
      {"power.ramp_time", Dim::time, "250 ms", "measured", "ms", Sign::positive, {K::power_scan}},
      {"power.points", Dim::count, "25", "assumed", "", Sign::positive, {K::power_scan}},
      {"power.dark_bins", Dim::count, "3", "assumed", "", Sign::positive, {K::power_scan}},
      {"power.reference_power", Dim::power, "24 uW", "measured", "uW", Sign::positive, {K::power_scan}},
      {"power.reference_rabi", Dim::angular, "25 MHz", "measured", "MHz", Sign::positive, {K::power_scan}},

      {"detuning.start", Dim::angular, "-8 MHz", "assumed", "MHz", Sign::any, {K::detuning_scan}},
      {"detuning.stop", Dim::angular, "30 MHz", "assumed", "MHz", Sign::any, {K::detuning_scan}},
      {"detuning.points", Dim::count, "20", "assumed", "", Sign::positive, {K::detuning_scan}},
      {"detuning.hold", Dim::time, "100 ms", "assumed", "ms", Sign::positive, {K::detuning_scan}},

      {"delivery.atoms", Dim::count, "1", "assumed", "", Sign::positive, {K::deliver_and_hold}},
      {"delivery.cruise_detuning", Dim::frequency, "50 kHz", "measured", "kHz", Sign::positive, {K::deliver_and_hold}},
      {"delivery.ramp_time", Dim::time, "20 ms", "assumed", "ms", Sign::positive, {K::deliver_and_hold}},
      {"delivery.probe_delay", Dim::time, "250 ms", "measured", "ms", Sign::non_negative, {K::deliver_and_hold}},
      {"delivery.hold", Dim::time, "4 s", "measured", "s", Sign::positive, {K::deliver_and_hold}},
      {"delivery.bin_width", Dim::time, "10 ms", "assumed", "ms", Sign::positive, {K::deliver_and_hold}},

      {"lifetime.max_atoms", Dim::count, "4", "measured", "", Sign::positive, {K::lifetime_study}},
      {"lifetime.hold", Dim::time, "10 s", "assumed", "s", Sign::positive, {K::lifetime_study}},
      {"lifetime.curve_points", Dim::count, "101", "assumed", "", Sign::positive, {K::lifetime_study}},
  };
  return s;
}

/// Metrics each scenario reports; [expect] keys must come from this list.
inline std::vector<std::string> metric_names(ScenarioKind k) {
  switch (k) {
  case ScenarioKind::mot_counting:
    return {"snr", "snr_min", "count_accuracy", "resolved_peaks", "single_atom_unit", "background_level",
            "mean_atoms", "traces"};
  case ScenarioKind::deliver_and_hold:
    return {"runs", "delivered_fraction", "per_atom_rate", "per_atom_rate_expected", "survival_time", "losses",
            "arrival_time", "hold_offset"};
  case ScenarioKind::transverse_scan:
    return {"w_s", "w_s_expected", "implied_waist", "amplitude", "center", "background", "runs_kept", "attempts",
            "reduced_chi_square"};
  case ScenarioKind::multipass_sweep:
    return {"commanded_passes", "peaks_median", "fraction_exact", "runs_kept", "attempts"};
  case ScenarioKind::power_scan:
    return {"slope", "intercept", "r_squared", "excluded_points", "dark_mean", "dark_threshold",
            "exclusion_consistent", "quoted_cavity_detuning"};
  case ScenarioKind::detuning_scan:
    return {"center", "hwhm", "hwhm_over_kappa", "amplitude", "background", "fitted_points", "heating_points"};
  case ScenarioKind::lifetime_study: {
    std::vector<std::string> out;
    for (int n = 1; n <= 16; ++n) {
      out.push_back("lifetime_" + std::to_string(n));
      out.push_back("lifetime_expected_" + std::to_string(n));
    }
    return out;
  }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Resolved configuration

struct ConfigValue {
  Dim dim = Dim::ratio;
  double si = 0.0;
  std::string text;
  std::string display_unit;
  /// "default:<kind>", "config" or "cli".
  std::string provenance;
};

struct Expectation {
  std::string metric;
  double lo = 0.0;
  double hi = 0.0;
};

struct ScenarioConfig {
  ScenarioKind scenario = ScenarioKind::detuning_scan;
  std::map<std::string, ConfigValue> values;
  std::vector<Expectation> expectations;

  const ConfigValue& at(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) throw ConfigError("configuration has no key '" + key + "'");
    return it->second;
  }
  double num(const std::string& key) const { return at(key).si; }
  int count(const std::string& key) const { return static_cast<int>(std::llround(at(key).si)); }
  const std::string& text(const std::string& key) const { return at(key).text; }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(std::llround(num("seed"))); }
  int repetitions() const { return count("repetitions"); }
  bool noise() const { return at("noise").si != 0.0; }

  /// Value in its display unit (what the report and config CSV show).
  double display(const std::string& key) const {
    const auto& v = at(key);
    for (const auto& u : units_for(v.dim))
      if (u.unit == v.display_unit) return v.si / u.factor;
    return v.si;
  }
};

/// Aggregated validation failure; one entry per problem, each with its key
/// path (and line number when known).
class ConfigValidationError : public ConfigError {
public:
  explicit ConfigValidationError(std::vector<std::string> problems)
      : ConfigError(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s = "invalid configuration:";
    for (const auto& x : p) s += "\n  " + x;
    return s;
  }
  std::vector<std::string> problems_;
};

namespace detail {

inline const FieldSpec* find_field(std::string_view key) {
  for (const auto& f : schema())
    if (f.key == key) return &f;
  return nullptr;
}

inline bool is_multiatom_key(std::string_view key, int* n = nullptr) {
  constexpr std::string_view prefix = "loss.multiatom.";
  if (key.substr(0, prefix.size()) != prefix) return false;
  const auto rest = key.substr(prefix.size());
  int v = 0;
  const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), v);
  if (ec != std::errc() || ptr != rest.data() + rest.size() || v < 1) return false;
  if (n) *n = v;
  return true;
}

inline bool applies(const FieldSpec& f, ScenarioKind k) {
  return f.scenarios.empty() || std::find(f.scenarios.begin(), f.scenarios.end(), k) != f.scenarios.end();
}

inline std::string_view default_for(const FieldSpec& f, ScenarioKind k) {
  for (const auto& [kind, text] : f.scenario_defaults)
    if (kind == k) return text;
  return f.default_text;
}

/// Parses one value per the field spec into `out`; throws ConfigError.
inline void parse_value(const FieldSpec& f, std::string_view text, ConfigValue& out) {
  text = trim(text);
  out.dim = f.dim;
  out.display_unit = std::string(f.display_unit);
  switch (f.dim) {
  case Dim::choice:
    if (std::find(f.choices.begin(), f.choices.end(), text) == f.choices.end() && !f.choices.empty()) {
      std::string allowed;
      for (auto c : f.choices) allowed += (allowed.empty() ? "" : ", ") + std::string(c);
      throw ConfigError("'" + std::string(text) + "' is not one of " + allowed);
    }
    out.text = std::string(text);
    return;
  case Dim::flag:
    if (text == "on" || text == "true" || text == "yes") out.si = 1.0;
    else if (text == "off" || text == "false" || text == "no") out.si = 0.0;
    else throw ConfigError("expected on/off");
    out.text = out.si != 0.0 ? "on" : "off";
    return;
  case Dim::count:
  case Dim::integer: {
    const auto v = parse_double(text);
    if (!v || *v != std::floor(*v) || std::abs(*v) > 9.0e15) throw ConfigError("'" + std::string(text) + "' is not an integer");
    out.si = *v;
    break;
  }
  default:
    out.si = parse_quantity(text, f.dim);
  }
  if (!std::isfinite(out.si)) throw ConfigError("value must be finite");
  if (f.sign == Sign::positive && !(out.si > 0.0)) throw ConfigError("must be > 0");
  if (f.sign == Sign::non_negative && !(out.si >= 0.0)) throw ConfigError("must be >= 0");
  if (f.dim == Dim::fraction && out.si > 1.0) throw ConfigError("must be <= 1");
  out.text = format_number(out.si);
}

inline FieldSpec multiatom_spec(std::string_view key) {
  FieldSpec f = *find_field("loss.multiatom.4");
  f.key = key;
  return f;
}

} // namespace detail

struct RawEntry {
  std::string key;
  std::string value;
  int line = 0;
};

/// Splits config text into section-qualified entries. Syntax problems are
/// appended to `problems`.
inline std::vector<RawEntry> parse_config_text(std::string_view text, std::vector<std::string>& problems) {
  std::vector<RawEntry> out;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find_first_of("#;"); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') {
        problems.push_back(where + "unterminated section header");
        continue;
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      problems.push_back(where + "expected 'key = value'");
      continue;
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) {
      problems.push_back(where + "empty key");
      continue;
    }
    out.push_back({section.empty() ? key : section + "." + key, std::string(trim(line.substr(eq + 1))), line_no});
  }
  return out;
}

/// CLI-level overrides applied on top of the file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  bool no_noise = false;
};

/// Parses, checks and default-completes a configuration. Every problem is
/// collected before throwing ConfigValidationError.
inline ScenarioConfig validate_config(std::string_view text, const Overrides& cli = {}) {
  std::vector<std::string> problems;
  const auto entries = parse_config_text(text, problems);

  ScenarioConfig cfg;
  std::optional<ScenarioKind> kind;
  std::map<std::string, int> seen;
  for (const auto& e : entries) {
    if (e.key != "scenario") continue;
    kind = scenario_from_string(e.value);
    if (!kind) {
      std::string allowed;
      for (const auto& s : kScenarios) allowed += (allowed.empty() ? "" : ", ") + std::string(s.name);
      problems.push_back("line " + std::to_string(e.line) + ": scenario: unknown scenario '" + e.value +
                         "' (expected one of " + allowed + ")");
    }
  }
  if (!kind) {
    if (std::none_of(entries.begin(), entries.end(), [](auto& e) { return e.key == "scenario"; }))
      problems.push_back("scenario: required field missing");
    throw ConfigValidationError(problems);
  }
  cfg.scenario = *kind;

  const auto metrics = metric_names(*kind);
  for (const auto& e : entries) {
    const std::string where = "line " + std::to_string(e.line) + ": " + e.key + ": ";
    if (seen[e.key]++ > 0) {
      problems.push_back(where + "duplicate key");
      continue;
    }
    if (e.key.rfind("expect.", 0) == 0) {
      const std::string metric = e.key.substr(7);
      if (std::find(metrics.begin(), metrics.end(), metric) == metrics.end()) {
        problems.push_back(where + "no metric '" + metric + "' in scenario " + std::string(to_string(*kind)));
        continue;
      }
      const auto dots = e.value.find("..");
      const auto lo = dots == std::string::npos ? std::nullopt : parse_double(std::string_view(e.value).substr(0, dots));
      const auto hi = dots == std::string::npos ? std::nullopt : parse_double(std::string_view(e.value).substr(dots + 2));
      if (!lo || !hi || *lo > *hi) {
        problems.push_back(where + "expected 'lo .. hi' with lo <= hi");
        continue;
      }
      cfg.expectations.push_back({metric, *lo, *hi});
      continue;
    }
    FieldSpec dynamic;
    const FieldSpec* f = detail::find_field(e.key);
    if (!f && detail::is_multiatom_key(e.key)) {
      dynamic = detail::multiatom_spec(e.key);
      f = &dynamic;
    }
    if (!f) {
      problems.push_back(where + "unknown key");
      continue;
    }
    if (!detail::applies(*f, *kind)) {
      problems.push_back(where + "not used by scenario " + std::string(to_string(*kind)));
      continue;
    }
    ConfigValue v;
    try {
      detail::parse_value(*f, e.value, v);
    } catch (const ConfigError& err) {
      problems.push_back(where + err.what());
      continue;
    }
    v.provenance = "config";
    cfg.values[e.key] = std::move(v);
  }

  for (const auto& f : schema()) {
    if (!detail::applies(f, *kind) || cfg.values.count(std::string(f.key))) continue;
    if (f.key == "scenario") {
      ConfigValue v;
      v.dim = Dim::choice;
      v.text = std::string(to_string(*kind));
      v.provenance = "config";
      cfg.values["scenario"] = v;
      continue;
    }
    ConfigValue v;
    detail::parse_value(f, detail::default_for(f, *kind), v);
    v.provenance = "default:" + std::string(f.provenance);
    cfg.values[std::string(f.key)] = std::move(v);
  }

  if (cli.seed) {
    auto& v = cfg.values["seed"];
    v.si = static_cast<double>(*cli.seed);
    v.text = format_number(v.si);
    v.provenance = "cli";
  }
  if (cli.no_noise) {
    auto& v = cfg.values["noise"];
    v.si = 0.0;
    v.text = "off";
    v.provenance = "cli";
  }

  // Cross-field checks.
  if (problems.empty()) {
    auto check = [&](bool ok, const std::string& msg) {
      if (!ok) problems.push_back(msg);
    };
    if (*kind == ScenarioKind::power_scan)
      check(cfg.num("power.end") > cfg.num("power.start"), "power.end: must exceed power.start");
    if (*kind == ScenarioKind::detuning_scan) {
      check(cfg.num("detuning.stop") > cfg.num("detuning.start"), "detuning.stop: must exceed detuning.start");
      check(cfg.count("detuning.points") >= 5, "detuning.points: need at least 5 points for a Lorentzian fit");
    }
    if (*kind == ScenarioKind::power_scan)
      check(cfg.count("power.points") >= 3, "power.points: need at least 3 points for a linear fit");
    if (*kind == ScenarioKind::transverse_scan || *kind == ScenarioKind::multipass_sweep) {
      const double crossing = 2.0 * cfg.num("sweep.amplitude") / cfg.num("sweep.speed");
      check(cfg.num("sweep.bin_width") < crossing, "sweep.bin_width: must be shorter than one pass");
    }
    if (*kind == ScenarioKind::mot_counting)
      check(cfg.num("mot.bin_width") * 4.0 <= cfg.num("mot.duration"), "mot.bin_width: need at least 4 bins");
    if (*kind == ScenarioKind::deliver_and_hold) {
      const double v = velocity_from_detuning(cfg.num("delivery.cruise_detuning"), cfg.num("conveyor.wavelength"));
      check(0.5 * v * cfg.num("delivery.ramp_time") <= cfg.num("conveyor.mot_distance"),
            "delivery.ramp_time: ramp covers more than conveyor.mot_distance");
    }
  }

  if (!problems.empty()) throw ConfigValidationError(problems);
  return cfg;
}

inline ScenarioConfig load_config(const std::string& path, const Overrides& cli = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigValidationError({"cannot read config file '" + path + "'"});
  std::stringstream ss;
  ss << in.rdbuf();
  return validate_config(ss.str(), cli);
}

/// Canonical text form; re-parsing it yields the same resolved values.
inline std::string serialize_config(const ScenarioConfig& cfg) {
  std::ostringstream os;
  os << "scenario = " << to_string(cfg.scenario) << '\n';
  auto emit = [&](const std::string& name, const std::string& key, const ConfigValue& v) {
    os << name << " = ";
    if (v.dim == Dim::choice || v.dim == Dim::flag) {
      os << v.text;
    } else {
      // Shortest decimal that converts back to the same SI value.
      double factor = 1.0;
      for (const auto& u : units_for(v.dim))
        if (u.unit == v.display_unit) factor = u.factor;
      char buf[40];
      for (int prec = 10; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, cfg.display(key));
        if (const auto back = parse_double(buf); back && *back * factor == v.si) break;
      }
      os << buf;
      if (!v.display_unit.empty()) os << ' ' << v.display_unit;
    }
    os << '\n';
  };
  for (const auto& [key, v] : cfg.values)
    if (key != "scenario" && key.find('.') == std::string::npos) emit(key, key, v);
  std::string section;
  for (const auto& [key, v] : cfg.values) {
    const auto first = key.find('.');
    if (first == std::string::npos) continue;
    const std::string sec = key.substr(0, first);
    if (sec != section) {
      os << "\n[" << sec << "]\n";
      section = sec;
    }
    emit(key.substr(first + 1), key, v);
  }
  if (!cfg.expectations.empty()) {
    os << "\n[expect]\n";
    for (const auto& e : cfg.expectations) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%.17g .. %.17g", e.lo, e.hi);
      os << e.metric << " = " << buf << '\n';
    }
  }
  return os.str();
}

/// 64-bit FNV-1a over the sorted canonical "key=value" lines.
inline std::string config_digest(const ScenarioConfig& cfg) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [key, v] : cfg.values) {
    feed(key);
    feed("=");
    feed(v.dim == Dim::choice || v.dim == Dim::flag ? v.text : format_number(v.si));
    feed("\n");
  }
  for (const auto& e : cfg.expectations) {
    feed("expect." + e.metric + "=" + format_number(e.lo) + ".." + format_number(e.hi) + "\n");
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Mapping onto model parameters

inline ExperimentParams experiment_params(const ScenarioConfig& c) {
  ExperimentParams p;
  p.atom.gamma = c.num("atom.gamma");
  p.atom.transition_wavelength = c.num("atom.wavelength");
  p.cavity.g0 = c.num("cavity.g0");
  p.cavity.kappa = c.num("cavity.kappa");
  p.cavity.mode_waist = c.num("cavity.mode_waist");
  p.cavity.cavity_length = c.num("cavity.length");
  p.cavity.total_losses_ppm = c.num("cavity.losses");
  p.probe.rabi_frequency = c.num("probe.rabi_frequency");
  p.probe.probe_atom_detuning_bare = c.num("probe.atom_detuning");
  p.probe.cavity_probe_detuning = c.num("probe.cavity_detuning");
  p.probe_beams = c.text("probe.beams") == "two_beams" ? ProbeBeamSum::two_beams : ProbeBeamSum::per_beam;
  p.axial_model = c.text("coupling.axial_model") == "fixed_z" ? AxialModel::fixed_z : AxialModel::uniform_average;
  p.axial_z = c.num("coupling.axial_z");
  p.detection.stage_efficiencies = {c.num("detection.cavity_output"), c.num("detection.path"),
                                    c.num("detection.detector")};
  p.detection.dark_count_rate = c.num("detection.dark_rate");
  p.signal_reduction = c.num("model.signal_reduction");
  p.conveyor.beam.wavelength = c.num("conveyor.wavelength");
  p.conveyor.beam.waist_at_focus = c.num("conveyor.waist");
  p.conveyor.beam.power = c.num("conveyor.power");
  p.conveyor.depth_at_focus = c.num("conveyor.depth");
  p.conveyor.stark_shift_at_focus = c.num("conveyor.stark_shift");
  p.loading.beam.wavelength = c.num("conveyor.wavelength");
  p.loading.beam.waist_at_focus = c.num("loading.waist");
  p.loading.beam.power = c.num("loading.power");
  p.loading.depth_at_focus = c.num("loading.depth");
  p.transfer.mot_to_lattice = c.num("transfer.mot_to_lattice");
  p.transfer.mot_to_cavity = c.num("transfer.mot_to_cavity");
  p.mot_distance = c.num("conveyor.mot_distance");
  p.validate();
  return p;
}

inline LossModel loss_model(const ScenarioConfig& c) {
  LossModel loss;
  loss.cooling_lifetime = c.num("loss.cooling_lifetime");
  loss.heating_lifetime = c.num("loss.heating_lifetime");
  loss.multiatom_lifetime_map.clear();
  for (const auto& [key, v] : c.values) {
    int n = 0;
    if (detail::is_multiatom_key(key, &n)) loss.multiatom_lifetime_map[n] = v.si;
  }
  loss.validate();
  return loss;
}

inline MotModel mot_model(const ScenarioConfig& c) {
  MotModel m;
  m.loading_rate = c.num("mot.loading_rate");
  m.per_atom_loss_rate = c.num("mot.loss_rate");
  m.fluorescence_per_atom = c.num("mot.fluorescence");
  m.background_rate = c.num("mot.background");
  m.read_noise_sigma = c.num("mot.read_noise");
  m.validate();
  return m;
}

} // namespace cqed::scenario
