#pragma once

// Batch commands behind the command-line tool. Exit codes: 0 success,
// 1 solver failure, 2 configuration or I/O error.

#include "spb/config.hpp"
#include "spb/mms.hpp"
#include "spb/solver.hpp"
#include "spb/vtk.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

namespace spb {

inline constexpr int kExitOk = 0;
inline constexpr int kExitSolverFailure = 1;
inline constexpr int kExitConfigError = 2;

namespace detail {

inline std::filesystem::path prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw ConfigError("output directory not writable: " + dir);
  return dir;
}

/// Problem data for the configured case: manufactured solution or all-zero data.
inline ProblemConfig problem_data(const RunConfig& cfg) {
  if (cfg.problem == "manufactured") return manufactured_config(manufactured_solution(), cfg.physics());
  return cfg.physics();
}

inline nlohmann::json diagnostics_json(const DiagnosticsReport& d) {
  nlohmann::json j;
  j["small_data_1"] = d.small_data_1;
  j["small_data_2"] = d.small_data_2;
  j["small_data_3"] = d.small_data_3;
  j["small_data_1_holds"] = d.condition_1_holds();
  j["small_data_2_holds"] = d.condition_2_holds();
  j["small_data_3_holds"] = d.condition_3_holds();
  j["f_norm"] = d.f_norm;
  j["g_norm"] = d.g_norm;
  j["w_radius"] = d.w_radius;
  if (d.z_unconditional()) j["z_radius"] = "unconditional";
  else j["z_radius"] = d.z_radius;
  if (d.u_norm) j["u_norm_h1"] = *d.u_norm;
  if (d.psi_norm) j["psi_norm_h1"] = *d.psi_norm;
  if (d.u_norm) j["in_W"] = d.in_W();
  if (d.psi_norm) j["in_Z"] = d.in_Z();
  j["note"] = "C_p and C_sob are user-supplied (default 1); conditions are heuristic unless sharp constants are given";
  return j;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace detail

/// Manufactured-solution convergence study; writes convergence_k{k}.csv.
inline int cmd_convergence(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::filesystem::path dir;
  try {
    cfg.validate();
    if (cfg.problem != "manufactured") throw ConfigError("problem: convergence needs the manufactured solution");
    dir = detail::prepare_out_dir(cfg.out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  StudyOptions opts;
  opts.solver = {cfg.tol, cfg.maxit};
  opts.kind = cfg.solver == "picard" ? SolverKind::picard : SolverKind::newton;
  opts.diagonal = cfg.mesh_diagonal();
  opts.on_row = [&err](const ConvergenceRow& row) {
    err << "  level done: DoF " << row.dofs << ", " << row.iterations << " iterations\n";
  };
  ConvergenceTable table;
  try {
    table = run_convergence_study(cfg.degree, cfg.levels, cfg.physics(), opts);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitSolverFailure;
  }
  const auto path = dir / ("convergence_k" + std::to_string(cfg.degree) + ".csv");
  {
    std::ofstream csv(path);
    if (!csv) {
      err << "error: cannot write " << path << '\n';
      return kExitConfigError;
    }
    write_csv(table, csv);
  }
  write_text(table, out);
  if (!table.complete) {
    err << "error: " << table.failure << '\n';
    return kExitSolverFailure;
  }
  return kExitOk;
}

/// Single solve on an n x n mesh; writes solution.vtk and report.json.
inline int cmd_solve(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::filesystem::path dir;
  try {
    cfg.validate();
    dir = detail::prepare_out_dir(cfg.out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  const ProblemConfig problem_cfg = detail::problem_data(cfg);
  auto mesh = std::make_shared<const Mesh>(build_unit_square_mesh(cfg.n, manufactured_dirichlet_sides(), cfg.mesh_diagonal()));
  const TaylorHoodSpaces spaces = build_taylor_hood(mesh, cfg.degree);
  const CoupledProblem problem(spaces, problem_cfg);
  SystemState state = problem.initial_state();
  const SolverOptions opts{cfg.tol, cfg.maxit};
  const NonlinearReport report = cfg.solver == "picard" ? picard_solve(problem, state, opts) : newton_solve(problem, state, opts);

  nlohmann::json j;
  j["solver"] = cfg.solver;
  j["problem"] = cfg.problem;
  j["degree"] = cfg.degree;
  j["n"] = cfg.n;
  j["h"] = mesh_size(*mesh);
  j["dofs"] = count_free_dofs(spaces);
  j["converged"] = report.converged;
  j["iterations"] = report.iterations;
  j["residuals"] = report.residuals;
  if (!report.failure.empty()) j["failure"] = report.failure;
  j["psi_min"] = report.psi_min;
  j["psi_max"] = report.psi_max;
  j["in_W"] = report.in_W;
  j["in_Z"] = report.in_Z;
  int code = report.converged ? kExitOk : kExitSolverFailure;
  try {
    j["diagnostics"] = detail::diagnostics_json(small_data_diagnostics(spaces, problem_cfg, &state));
    if (cfg.problem == "manufactured" && report.converged) {
      const ErrorNorms e = error_norms(spaces, state, manufactured_solution(), problem.quadrature_degree());
      j["errors"] = {{"u_h1", e.u}, {"p_l2", e.p}, {"psi_h1", e.psi}};
    }
    write_vtk(spaces, state, (dir / "solution.vtk").string());
    detail::write_json(dir / "report.json", j);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  out << j.dump(2) << '\n';
  if (!report.converged) err << "error: " << report.failure << '\n';
  return code;
}

/// Small-data diagnostics of the configured data on an n x n mesh (no solve).
inline int cmd_diagnose(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    cfg.validate();
    const auto dir = detail::prepare_out_dir(cfg.out);
    auto mesh = std::make_shared<const Mesh>(build_unit_square_mesh(cfg.n, manufactured_dirichlet_sides(), cfg.mesh_diagonal()));
    const TaylorHoodSpaces spaces = build_taylor_hood(mesh, cfg.degree);
    const nlohmann::json j = detail::diagnostics_json(small_data_diagnostics(spaces, detail::problem_data(cfg)));
    detail::write_json(dir / "diagnostics.json", j);
    out << j.dump(2) << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  return kExitOk;
}

inline int run_command(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  if (cfg.command == "solve") return cmd_solve(cfg, out, err);
  if (cfg.command == "diagnose") return cmd_diagnose(cfg, out, err);
  if (cfg.command == "convergence") return cmd_convergence(cfg, out, err);
  err << "error: unknown command " << cfg.command << '\n';
  return kExitConfigError;
}

}  // namespace spb
