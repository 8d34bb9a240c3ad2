#include <iostream>

#include "CLI11.hpp"
#include "spikefluct/cli.hpp"

int main(int argc, char** argv) {
  using namespace spikefluct::cli;
  CLI::App app{"Outlier locations and fluctuation laws for spiked polynomial random matrix models"};
  app.require_subcommand(1);
  RunConfig rc;

  auto common = [&rc](CLI::App* sub) {
    sub->add_option("--config", rc.config, "model JSON file")->check(CLI::ExistingFile);
    sub->add_option("--out", rc.out, "output directory");
    sub->add_option("--seed", rc.seed, "master seed");
    sub->add_option("--n", rc.n, "matrix size N");
    sub->add_option("--trials", rc.trials, "Monte Carlo trials");
    sub->add_option("--eta-min", rc.eta_min, "floor of the regularization ladder");
    sub->add_option("--tol", rc.tol, "Dyson solver tolerance");
    sub->add_option("--grid", rc.grid, "support scan grid points");
    sub->add_option("--window", rc.window, "outlier window half-width");
    sub->add_option("--threads", rc.threads, "worker threads for trials");
  };
  auto* lin = app.add_subcommand("linearize", "build the pencil and certify it");
  auto* out = app.add_subcommand("outliers", "support scan and outlier locations");
  auto* flu = app.add_subcommand("fluct", "fluctuation coefficients and limit laws");
  auto* sim = app.add_subcommand("simulate", "Monte Carlo comparison against the predicted law");
  auto* ver = app.add_subcommand("verify-example", "check the general machinery against the closed forms");
  for (auto* s : {lin, out, flu, sim, ver}) common(s);
  sim->add_option("--outlier", rc.outlier_index, "index of the outlier to simulate (ascending rho)");
  ver->add_option("--theta", rc.theta, "spike value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ExitCode::input;
  }
  if (*lin) return cmd_linearize(rc);
  if (*out) return cmd_outliers(rc);
  if (*flu) return cmd_fluct(rc);
  if (*sim) return cmd_simulate(rc);
  return cmd_verify_example(rc);
}
