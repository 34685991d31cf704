#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "strapp/cli.hpp"

namespace {

int dispatch(int argc, char** argv) {
  CLI::App app{"Historical-data borrowing for GLMs: power priors, the scale "
               "transformed power prior and its relatives, samplers, and the "
               "simulation harness"};
  app.require_subcommand(1);

  strapp::cli::Overrides ov;
  std::uint64_t seed_value = 0;
  int draws_value = 0, burn_value = -1, workers_value = 0;
  auto* opt_seed = app.add_option("--seed", seed_value, "base RNG seed")
                       ->envname("STRAPP_SEED");
  auto* opt_draws =
      app.add_option("--draws", draws_value, "retained MCMC draws per chain")
          ->envname("STRAPP_DRAWS");
  auto* opt_burn = app.add_option("--burn-in", burn_value,
                                  "discarded leading draws")
                       ->envname("STRAPP_BURN_IN");
  auto* opt_workers =
      app.add_option("--workers", workers_value, "simulation worker threads")
          ->envname("STRAPP_WORKERS");
  app.add_flag("--paper-scale", ov.paper_scale,
               "full-size simulation (5000 replicates x 25000 draws)")
      ->envname("STRAPP_PAPER_SCALE");

  std::string config_path;
  auto* fit = app.add_subcommand("fit", "posterior analysis of one data pair");
  fit->fallthrough();
  fit->add_option("--config", config_path, "analysis config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);

  auto* grid = app.add_subcommand("dic-grid",
                                  "DIC over an (a0, omega0) grid");
  grid->fallthrough();
  grid->add_option("--config", config_path, "analysis config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);

  double n0 = 0, n1 = 0, a0 = 0, sigma0 = 0, sigma1 = 0;
  auto* thr = app.add_subcommand(
      "threshold", "normal-normal MSE equality point for the treatment effect");
  thr->fallthrough();
  thr->add_option("--n0", n0)->required();
  thr->add_option("--n1", n1)->required();
  thr->add_option("--a0", a0)->required();
  thr->add_option("--sigma0", sigma0)->required();
  thr->add_option("--sigma1", sigma1)->required();

  std::string scenario_name, scenario_config, sim_out = "metrics.csv";
  auto* sim = app.add_subcommand("simulate", "run a simulation scenario");
  sim->fallthrough();
  sim->add_option("--scenario", scenario_name,
                  "preset name (normal-normal-s0gt, normal-normal-s0lt, "
                  "binary-poisson, binary-normal-violated, "
                  "binary-normal-holds, poisson-exponential)");
  sim->add_option("--config", scenario_config, "scenario config (JSON)")
      ->check(CLI::ExistingFile);
  sim->add_option("--out", sim_out, "metrics CSV path");

  CLI11_PARSE(app, argc, argv);
  if (opt_seed->count()) ov.seed = seed_value;
  if (opt_draws->count()) ov.draws = draws_value;
  if (opt_burn->count()) ov.burn_in = burn_value;
  if (opt_workers->count()) ov.workers = workers_value;

  if (fit->parsed())
    return strapp::cli::cmd_fit(strapp::io::load_analysis_config(config_path),
                                ov);
  if (grid->parsed())
    return strapp::cli::cmd_dic_grid(
        strapp::io::load_analysis_config(config_path), ov);
  if (thr->parsed())
    return strapp::cli::cmd_threshold(n0, n1, a0, sigma0, sigma1);
  if (sim->parsed()) {
    strapp::Scenario sc;
    if (!scenario_config.empty()) {
      std::ifstream in(scenario_config);
      strapp::io::Json j;
      in >> j;
      sc = strapp::cli::scenario_from_json(j);
    } else if (!scenario_name.empty()) {
      sc = strapp::simharness::scenario_by_name(scenario_name);
    } else {
      std::cerr << "simulate needs --scenario or --config\n";
      return 2;
    }
    return strapp::cli::cmd_simulate(sc, ov, sim_out);
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const strapp::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const strapp::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const strapp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
