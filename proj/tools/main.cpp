#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "levisim/config.hpp"
#include "levisim/scenarios.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string format;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("config", args.config_path, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out-dir", args.out_dir, "output directory override");
  cmd->add_option("--format", args.format, "csv|json|csv,json");
  cmd->add_option("--threads", args.threads, "worker threads");
  auto* seed = cmd->add_option("--seed", args.seed, "seed override");
  cmd->callback([&args, seed] { args.seed_set = seed->count() > 0; });
}

int run_with(const CommonArgs& args,
             std::initializer_list<levisim::ScenarioType> allowed) {
  const auto parsed = levisim::parse_config_file(args.config_path);
  if (!parsed.ok()) {
    std::cerr << "config errors in " << args.config_path << ":\n";
    for (const auto& e : parsed.errors) std::cerr << "  " << e << "\n";
    return levisim::exit_config_error;
  }
  const auto& cfg = *parsed.config;
  bool ok = false;
  for (auto t : allowed) ok = ok || t == cfg.scenario;
  if (!ok) {
    std::cerr << "error: scenario '" << levisim::scenario_name(cfg.scenario)
              << "' does not match this subcommand\n";
    return levisim::exit_config_error;
  }
  levisim::RunOptions options;
  if (args.seed_set) options.seed = args.seed;
  options.out_dir = args.out_dir;
  options.threads = args.threads;
  options.format = args.format;
  return levisim::execute_scenario(cfg, options, std::cerr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "levisim - electrical feedback cooling simulator for levitated "
      "nanoparticles"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "levisim 0.1.0");

  CommonArgs run_args, design_args, calib_args, sweep_args;
  using ST = levisim::ScenarioType;

  auto* run = app.add_subcommand(
      "run", "run a free, closed-loop or quantum simulation");
  add_common(run, run_args);

  auto* design = app.add_subcommand("design", "synthesize controller gains");
  add_common(design, design_args);

  auto* calibrate =
      app.add_subcommand("calibrate", "detector and electrode calibration");
  add_common(calibrate, calib_args);

  auto* sweep = app.add_subcommand("sweep", "delay or pressure sweep");
  add_common(sweep, sweep_args);

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    return run_with(run_args, {ST::free_run, ST::closed_loop, ST::quantum});
  }
  if (design->parsed()) return run_with(design_args, {ST::design});
  if (calibrate->parsed()) return run_with(calib_args, {ST::calibrate});
  if (sweep->parsed()) {
    return run_with(sweep_args, {ST::delay_sweep, ST::pressure_sweep});
  }
  return levisim::exit_config_error;
}
