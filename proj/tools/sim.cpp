// sim: run, validate and list cavity-QED delivery scenarios.
//
//   sim run <config> [--seed N] [--out DIR] [--no-noise] [--emit-plots]
//   sim validate <config>
//   sim list-scenarios
//
// Exit codes: 0 success, 1 validation error, 2 runtime error,
// 3 configured expectation failed.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cqed/scenario/scenarios.hpp"

namespace {

enum Exit { ok = 0, validation_error = 1, runtime_error = 2, expectation_failed = 3 };

int report_validation(const cqed::ConfigError& e) {
  std::cerr << e.what() << '\n';
  return validation_error;
}

} // namespace

int main(int argc, char** argv) {
  using namespace cqed::scenario;

  CLI::App app{"Single-atom cavity QED delivery simulator"};
  app.require_subcommand(1);

  std::string run_config, out_dir = ".";
  std::optional<std::uint64_t> seed;
  bool no_noise = false, emit_plots = false;
  auto* run = app.add_subcommand("run", "Run a scenario and write CSV artifacts plus report.txt");
  run->add_option("config", run_config, "Scenario config file")->required();
  run->add_option("--seed", seed, "Override the configured seed");
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_flag("--no-noise", no_noise, "Disable all stochastic layers");
  run->add_flag("--emit-plots", emit_plots, "Also write matplotlib scripts");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a config and print the resolved values");
  validate->add_option("config", validate_path, "Scenario config file")->required();

  auto* list = app.add_subcommand("list-scenarios", "List available scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : validation_error;
  }

  if (list->parsed()) {
    for (const auto& s : kScenarios) std::cout << s.name << "  " << s.summary << '\n';
    return ok;
  }

  if (validate->parsed()) {
    try {
      const auto cfg = load_config(validate_path);
      std::cout << "# digest " << config_digest(cfg) << '\n' << serialize_config(cfg);
      return ok;
    } catch (const cqed::ConfigError& e) {
      return report_validation(e);
    }
  }

  ScenarioConfig cfg;
  try {
    Overrides cli;
    cli.seed = seed;
    cli.no_noise = no_noise;
    cfg = load_config(run_config, cli);
  } catch (const cqed::ConfigError& e) {
    return report_validation(e);
  }

  try {
    RunOptions opt;
    opt.emit_plots = emit_plots;
    const auto report = run_scenario(cfg, opt);
    write_outputs(report, cfg, out_dir);
    std::cout << render_report(report, cfg);
    if (!report.expectations_met()) {
      std::cerr << "expectation failed\n";
      return expectation_failed;
    }
    return ok;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return runtime_error;
  }
}
