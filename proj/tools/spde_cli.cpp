// SPDX-License-Identifier: Apache-2.0
//
// spde_cli <picard|ito-check|benchmark|hypothesis-check|simulate> [--config f] [--seed n] [--out dir] [--threads n]
//
// Exit status: 0 all diagnostics pass, 2 a diagnostic failed, 3 bad
// configuration, 4 solver divergence or nonconvergence.

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "spde/spde.hpp"

namespace {

constexpr int exit_pass = 0;
constexpr int exit_diagnostic = 2;
constexpr int exit_config = 3;
constexpr int exit_divergence = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semilinear SPDE simulation and verification driver"};
  app.require_subcommand(1, 1);

  std::string config_file;
  std::uint64_t seed = 0;
  std::string out_dir;
  unsigned threads = 0;
  app.add_option("--config", config_file, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed (overrides the config)");
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  app.add_option("--threads", threads, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
  app.fallthrough();

  auto* picard = app.add_subcommand("picard", "Picard iteration campaign");
  auto* ito = app.add_subcommand("ito-check", "pathwise Ito-type inequality check");
  auto* bench = app.add_subcommand("benchmark", "strong error against the linear closed form");
  auto* hyp = app.add_subcommand("hypothesis-check", "coefficient hypothesis checkers");
  auto* sim = app.add_subcommand("simulate", "direct solver path dump");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_pass : exit_config;
  }

  spde::RunConfig cfg;
  try {
    if (!config_file.empty()) cfg = spde::load_config(config_file);
    if (app.count("--seed")) cfg.seed = seed;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (threads > 0) cfg.threads = threads;
    spde::validate(cfg);
  } catch (const spde::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return exit_config;
  }

  const std::filesystem::path dir = cfg.output_dir;
  try {
    spde::CampaignOutcome outcome;
    if (picard->parsed()) outcome = spde::run_picard_campaign(cfg, dir);
    else if (ito->parsed()) outcome = spde::run_ito_check(cfg, dir);
    else if (bench->parsed()) outcome = spde::run_benchmark_oracle(cfg, dir);
    else if (hyp->parsed()) outcome = spde::run_hypothesis_check(cfg, dir);
    else if (sim->parsed()) outcome = spde::run_simulate(cfg, dir);
    outcome.summary.write(dir / "summary.txt");
    outcome.summary.write_run_info(dir / "run_info.txt");
    for (const auto& [k, v] : outcome.summary.entries()) {
      if (k.rfind("diagnostic.", 0) == 0) std::cout << k.substr(11) << ": " << v << "\n";
    }
    for (const auto& [k, v] : outcome.summary.run_info()) std::cout << k << ": " << v << "\n";
    std::cout << "summary: " << (dir / "summary.txt").string() << "\n";
    if (outcome.diverged) return exit_divergence;
    return outcome.summary.pass() ? exit_pass : exit_diagnostic;
  } catch (const spde::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return exit_config;
  } catch (const spde::HypothesisError& e) {
    std::cerr << "model hypotheses not satisfied: " << e.what() << "\n";
    return exit_config;
  } catch (const spde::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return exit_divergence;
  } catch (const spde::NonconvergenceError& e) {
    std::cerr << "nonconvergence: " << e.what() << "\n";
    return exit_divergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_diagnostic;
  }
}
