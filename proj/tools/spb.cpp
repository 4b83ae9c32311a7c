// spb: command-line front end.
//
//   spb convergence --degree 2 --levels 5 --out results
//   spb solve --n 16 --config run.toml
//   spb diagnose --config run.toml

#include "spb/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

struct Overrides {
  std::string config;
  std::optional<int> degree, levels, n, maxit;
  std::optional<double> tol;
  std::optional<std::string> out, solver, problem;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "configuration file (key = value lines)")->check(CLI::ExistingFile);
  sub->add_option("--degree", o.degree, "pressure degree k (velocity and potential use k+1)");
  sub->add_option("--tol", o.tol, "nonlinear tolerance");
  sub->add_option("--maxit", o.maxit, "maximum nonlinear iterations");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--solver", o.solver, "newton or picard");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stokes-Poisson-Boltzmann finite element solver"};
  app.require_subcommand(1);
  Overrides o;
  auto* solve = app.add_subcommand("solve", "solve on an n x n mesh, write solution.vtk and report.json");
  auto* conv = app.add_subcommand("convergence", "manufactured-solution convergence study");
  auto* diag = app.add_subcommand("diagnose", "small-data diagnostics of the configured data");
  for (auto* sub : {solve, conv, diag}) add_common(sub, o);
  for (auto* sub : {solve, diag}) {
    sub->add_option("--n", o.n, "cells per side");
    sub->add_option("--problem", o.problem, "manufactured or homogeneous");
  }
  conv->add_option("--levels", o.levels, "number of meshes n = 2, 4, ..., 2^levels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : spb::kExitConfigError;
  }

  spb::RunConfig cfg;
  try {
    if (!o.config.empty()) cfg = spb::parse_config(o.config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return spb::kExitConfigError;
  }
  cfg.command = app.get_subcommands().front()->get_name();
  if (o.degree) cfg.degree = *o.degree;
  if (o.levels) cfg.levels = *o.levels;
  if (o.n) cfg.n = *o.n;
  if (o.maxit) cfg.maxit = *o.maxit;
  if (o.tol) cfg.tol = *o.tol;
  if (o.out) cfg.out = *o.out;
  if (o.solver) cfg.solver = *o.solver;
  if (o.problem) cfg.problem = *o.problem;
  return spb::run_command(cfg);
}
