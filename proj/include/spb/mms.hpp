#pragma once

// Manufactured solutions, error norms and convergence tables.

#include "spb/fe_space.hpp"
#include "spb/forms.hpp"
#include "spb/mesh.hpp"
#include "spb/solver.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace spb {

/// Exact fields with the first and second derivatives needed for the
/// forcing and the Neumann data.
struct ExactSolution {
  std::function<Vec2(const Vec2&)> u;
  std::function<Mat2(const Vec2&)> grad_u;  // (i, j) = d u_i / d x_j
  std::function<Vec2(const Vec2&)> laplace_u;
  std::function<double(const Vec2&)> p;
  std::function<Vec2(const Vec2&)> grad_p;
  std::function<double(const Vec2&)> psi;
  std::function<Vec2(const Vec2&)> grad_psi;
  std::function<double(const Vec2&)> laplace_psi;
};

/// u = (cos(pi x) sin(pi y), -sin(pi x) cos(pi y)), p = sin(pi x) sin(pi y),
/// psi = cos(pi (x + y)).
inline ExactSolution manufactured_solution() {
  constexpr double pi = std::numbers::pi;
  ExactSolution e;
  e.u = [](const Vec2& x) {
    return Vec2(std::cos(pi * x.x()) * std::sin(pi * x.y()), -std::sin(pi * x.x()) * std::cos(pi * x.y()));
  };
  e.grad_u = [](const Vec2& x) {
    const double sx = std::sin(pi * x.x()), cx = std::cos(pi * x.x());
    const double sy = std::sin(pi * x.y()), cy = std::cos(pi * x.y());
    Mat2 g;
    g << -pi * sx * sy, pi * cx * cy, -pi * cx * cy, pi * sx * sy;
    return g;
  };
  e.laplace_u = [u = e.u](const Vec2& x) -> Vec2 { return -2.0 * pi * pi * u(x); };
  e.p = [](const Vec2& x) { return std::sin(pi * x.x()) * std::sin(pi * x.y()); };
  e.grad_p = [](const Vec2& x) {
    return Vec2(pi * std::cos(pi * x.x()) * std::sin(pi * x.y()), pi * std::sin(pi * x.x()) * std::cos(pi * x.y()));
  };
  e.psi = [](const Vec2& x) { return std::cos(pi * (x.x() + x.y())); };
  e.grad_psi = [](const Vec2& x) {
    const double s = -pi * std::sin(pi * (x.x() + x.y()));
    return Vec2(s, s);
  };
  e.laplace_psi = [](const Vec2& x) { return -2.0 * pi * pi * std::cos(pi * (x.x() + x.y())); };
  return e;
}

inline ExactSolution zero_solution() {
  ExactSolution e;
  e.u = [](const Vec2&) -> Vec2 { return Vec2::Zero(); };
  e.grad_u = [](const Vec2&) -> Mat2 { return Mat2::Zero(); };
  e.laplace_u = e.u;
  e.p = [](const Vec2&) { return 0.0; };
  e.grad_p = e.u;
  e.psi = e.p;
  e.grad_psi = e.u;
  e.laplace_psi = e.p;
  return e;
}

struct Forcing {
  VectorFunction f;
  ScalarFunction g;
};

/// f = -mu lap u + grad p + eps lap psi E and g = kappa(psi) + u . grad psi - eps lap psi.
inline Forcing derive_forcing(const ExactSolution& exact, const ProblemConfig& cfg) {
  const double mu = cfg.mu, eps = cfg.epsilon;
  const Vec2 E = cfg.E;
  Forcing out;
  out.f = [exact, mu, eps, E](const Vec2& x) -> Vec2 {
    return -mu * exact.laplace_u(x) + exact.grad_p(x) + eps * exact.laplace_psi(x) * E;
  };
  out.g = [exact, eps, cfg](const Vec2& x) {
    return kappa(exact.psi(x), cfg) + exact.u(x).dot(exact.grad_psi(x)) - eps * exact.laplace_psi(x);
  };
  return out;
}

struct NeumannData {
  Vec2 traction = Vec2::Zero();
  double flux = 0.0;
};

/// traction = (mu grad u - p I) n, flux = eps grad psi . n from exact derivatives.
inline NeumannData neumann_data(const ExactSolution& exact, const ProblemConfig& cfg, const Vec2& x, const Vec2& normal) {
  if (std::abs(normal.norm() - 1.0) > 1e-12) throw std::invalid_argument("neumann_data: normal must have unit length");
  return {cfg.mu * exact.grad_u(x) * normal - exact.p(x) * normal, cfg.epsilon * exact.grad_psi(x).dot(normal)};
}

/// Copy of `base` with forcing, Dirichlet and Neumann data taken from `exact`.
inline ProblemConfig manufactured_config(const ExactSolution& exact, ProblemConfig base) {
  const Forcing forcing = derive_forcing(exact, base);
  base.f = forcing.f;
  base.g = forcing.g;
  base.velocity_bc = exact.u;
  base.potential_bc = exact.psi;
  const ProblemConfig coeffs = base;
  base.traction = [exact, coeffs](const Vec2& x, const Vec2& n) { return neumann_data(exact, coeffs, x, n).traction; };
  base.flux = [exact, coeffs](const Vec2& x, const Vec2& n) { return neumann_data(exact, coeffs, x, n).flux; };
  return base;
}

struct ErrorNorms {
  double u = 0.0;    // H1
  double p = 0.0;    // L2
  double psi = 0.0;  // H1
};

/// Full H1 errors for velocity and potential, L2 error for pressure.
inline ErrorNorms error_norms(const TaylorHoodSpaces& spaces, const SystemState& state, const ExactSolution& exact,
                              int quad_degree) {
  const QuadratureRule rule = triangle_rule(quad_degree);
  const Tabulation vtab(spaces.velocity.element(), rule);
  const Tabulation ptab(spaces.pressure.element(), rule);
  const Tabulation stab(spaces.potential.element(), rule);
  const Mesh& mesh = spaces.velocity.mesh();
  double eu = 0.0, ep = 0.0, es = 0.0;
  detail::CellGeometry vgeo, pgeo, sgeo;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    vgeo.reinit(mesh, c, vtab);
    pgeo.reinit(mesh, c, ptab);
    sgeo.reinit(mesh, c, stab);
    const auto vd = spaces.velocity.cell_dofs(c);
    const auto pd = spaces.pressure.cell_dofs(c);
    const auto sd = spaces.potential.cell_dofs(c);
    double cu = 0.0, cp = 0.0, cs = 0.0;
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double w = rule.weights[q] * vgeo.map.det;
      const Vec2 x = vgeo.map(rule.points[q]);
      const VectorValue u = detail::vector_at(spaces.velocity, state.u, vd, vtab.values[q], vgeo.grads[q]);
      const double p = detail::scalar_at(state.p, pd, ptab.values[q], pgeo.grads[q]).value;
      const ScalarValue s = detail::scalar_at(state.psi, sd, stab.values[q], sgeo.grads[q]);
      cu += w * ((exact.u(x) - u.value).squaredNorm() + (exact.grad_u(x) - u.grad).squaredNorm());
      cp += w * std::pow(exact.p(x) - p, 2);
      cs += w * (std::pow(exact.psi(x) - s.value, 2) + (exact.grad_psi(x) - s.grad).squaredNorm());
    }
    eu += cu;
    ep += cp;
    es += cs;
  }
  return {std::sqrt(eu), std::sqrt(ep), std::sqrt(es)};
}

/// log(e / e_next) / log(h / h_next)
inline double convergence_rate(double e, double e_next, double h, double h_next) {
  if (!(e > 0.0) || !(e_next > 0.0) || !(h > 0.0) || !(h_next > 0.0))
    throw std::invalid_argument("convergence_rate: inputs must be positive");
  if (h == h_next) throw std::invalid_argument("convergence_rate: mesh sizes must differ");
  return std::log(e / e_next) / std::log(h / h_next);
}

struct ConvergenceRow {
  int dofs = 0;
  double h = 0.0;
  ErrorNorms errors;
  std::optional<double> rate_u, rate_p, rate_psi;  // empty on the first row
  int iterations = 0;
};

struct ConvergenceTable {
  int k = 1;
  std::vector<ConvergenceRow> rows;
  bool complete = true;
  std::string failure;
};

enum class SolverKind { newton, picard };

struct StudyOptions {
  SolverOptions solver;
  SolverKind kind = SolverKind::newton;
  Diagonal diagonal = Diagonal::lower_right_to_upper_left;
  std::function<void(const ConvergenceRow&)> on_row;  // progress callback
};

/// Dirichlet boundary (bottom and right sides) used by the manufactured test.
inline SideSet manufactured_dirichlet_sides() { return {Side::bottom, Side::right}; }

/// Solves the manufactured problem on n = 2, 4, ..., 2^levels. A failing
/// level stops the study; the table then holds the completed rows and
/// `complete == false`.
inline ConvergenceTable run_convergence_study(int k, int levels, const ProblemConfig& base,
                                              const StudyOptions& opts = {}) {
  if (levels < 2) throw std::invalid_argument("run_convergence_study needs levels >= 2");
  if (k < 1) throw std::invalid_argument("run_convergence_study needs k >= 1");
  const ExactSolution exact = manufactured_solution();
  const ProblemConfig cfg = manufactured_config(exact, base);
  ConvergenceTable table;
  table.k = k;
  for (int level = 1; level <= levels; ++level) {
    const int n = 1 << level;
    auto mesh = std::make_shared<const Mesh>(build_unit_square_mesh(n, manufactured_dirichlet_sides(), opts.diagonal));
    const TaylorHoodSpaces spaces = build_taylor_hood(mesh, k);
    const CoupledProblem problem(spaces, cfg);
    SystemState state = problem.initial_state();
    const NonlinearReport report =
        opts.kind == SolverKind::newton ? newton_solve(problem, state, opts.solver) : picard_solve(problem, state, opts.solver);
    if (!report.converged) {
      table.complete = false;
      table.failure = "level n=" + std::to_string(n) + ": " + report.failure;
      break;
    }
    ConvergenceRow row;
    row.dofs = count_free_dofs(spaces);
    row.h = mesh_size(*mesh);
    row.errors = error_norms(spaces, state, exact, problem.quadrature_degree());
    row.iterations = report.iterations;
    if (!table.rows.empty()) {
      const ConvergenceRow& prev = table.rows.back();
      row.rate_u = convergence_rate(prev.errors.u, row.errors.u, prev.h, row.h);
      row.rate_p = convergence_rate(prev.errors.p, row.errors.p, prev.h, row.h);
      row.rate_psi = convergence_rate(prev.errors.psi, row.errors.psi, prev.h, row.h);
    }
    table.rows.push_back(row);
    if (opts.on_row) opts.on_row(row);
  }
  return table;
}

namespace detail {
inline std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}
inline std::string rate_text(const std::optional<double>& r) { return r ? format("%.3f", *r) : std::string("★"); }
}  // namespace detail

/// CSV with columns DoF,h,e(u),r(u),e(p),r(p),e(psi),r(psi),it.
inline void write_csv(const ConvergenceTable& table, std::ostream& os) {
  os << "DoF,h,e(u),r(u),e(p),r(p),e(psi),r(psi),it\n";
  for (const ConvergenceRow& r : table.rows) {
    os << r.dofs << ',' << detail::format("%.4f", r.h) << ',' << detail::format("%.2e", r.errors.u) << ','
       << detail::rate_text(r.rate_u) << ',' << detail::format("%.2e", r.errors.p) << ',' << detail::rate_text(r.rate_p)
       << ',' << detail::format("%.2e", r.errors.psi) << ',' << detail::rate_text(r.rate_psi) << ',' << r.iterations
       << '\n';
  }
}

/// Aligned text rendering of the table.
inline void write_text(const ConvergenceTable& table, std::ostream& os) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%8s %8s %10s %7s %10s %7s %10s %7s %4s\n", "DoF", "h", "e(u)", "r(u)", "e(p)", "r(p)",
                "e(psi)", "r(psi)", "it");
  os << "k = " << table.k << '\n' << buf;
  for (const ConvergenceRow& r : table.rows) {
    // the star is multibyte, so pad rate columns by hand
    auto rate = [](const std::optional<double>& v) {
      const std::string s = detail::rate_text(v);
      return std::string(v ? 7 - s.size() : 6, ' ') + s;
    };
    std::snprintf(buf, sizeof buf, "%8d %8.4f %10.2e", r.dofs, r.h, r.errors.u);
    os << buf << ' ' << rate(r.rate_u);
    std::snprintf(buf, sizeof buf, " %10.2e", r.errors.p);
    os << buf << ' ' << rate(r.rate_p);
    std::snprintf(buf, sizeof buf, " %10.2e", r.errors.psi);
    os << buf << ' ' << rate(r.rate_psi);
    std::snprintf(buf, sizeof buf, " %4d\n", r.iterations);
    os << buf;
  }
}

}  // namespace spb
