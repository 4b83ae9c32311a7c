#pragma once

// Nonlinear solvers for the coupled discrete system and small-data diagnostics.

#include "spb/fe_space.hpp"
#include "spb/forms.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spb {

class SingularSystemError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string pivot_hint(const std::string& message, int pivot, const SparseSystem* sys) {
  std::string out = message;
  if (pivot < 0 || sys == nullptr) return out;
  out += " (pivot column " + std::to_string(pivot);
  if (pivot >= sys->pressure.offset && pivot < sys->pressure.offset + sys->pressure.size)
    out += ", pressure block: inf-sup violation, check the velocity/pressure pairing";
  return out + ")";
}

/// Column of the first zero pivot reported by SparseLU, or -1.
inline int parse_pivot(const std::string& message) {
  const auto pos = message.find_last_of(' ');
  if (pos == std::string::npos) return -1;
  try {
    return std::stoi(message.substr(pos + 1)) - 1;
  } catch (...) {
    return -1;
  }
}

}  // namespace detail

/// Direct sparse LU with partial pivoting. Throws SingularSystemError when
/// the factorisation breaks down or the relative residual exceeds 1e-10.
inline Vector linear_solve(const SparseMatrix& matrix, const Vector& rhs, const SparseSystem* blocks = nullptr) {
  if (matrix.rows() != matrix.cols() || matrix.rows() != rhs.size())
    throw std::invalid_argument("linear_solve: dimension mismatch");
  const Eigen::SparseMatrix<double> a = matrix;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(a);
  lu.factorize(a);
  if (lu.info() != Eigen::Success) {
    const std::string msg = lu.lastErrorMessage();
    int pivot = detail::parse_pivot(msg);
    if (pivot >= 0) {
      // map the factorisation column back to the original ordering
      const auto& perm = lu.colsPermutation().indices();
      for (Eigen::Index c = 0; c < perm.size(); ++c)
        if (perm(c) == pivot) {
          pivot = static_cast<int>(c);
          break;
        }
    }
    throw SingularSystemError(detail::pivot_hint("singular matrix: " + msg, pivot, blocks));
  }
  Vector x = lu.solve(rhs);
  const double bnorm = rhs.norm();
  const double rel = (a * x - rhs).norm() / (bnorm > 0.0 ? bnorm : 1.0);
  if (!x.allFinite() || !(rel <= 1e-10)) {
    // one step of iterative refinement before giving up
    if (x.allFinite()) {
      x += lu.solve(rhs - a * x);
      const double rel2 = (a * x - rhs).norm() / (bnorm > 0.0 ? bnorm : 1.0);
      if (x.allFinite() && rel2 <= 1e-10) return x;
    }
    throw SingularSystemError(detail::pivot_hint("ill-conditioned or singular matrix: relative residual " + std::to_string(rel),
                                                 -1, blocks));
  }
  return x;
}

inline Vector linear_solve(const SparseSystem& system) { return linear_solve(system.matrix, system.rhs, &system); }

struct NonlinearReport {
  int iterations = 0;
  std::vector<double> residuals;  // Newton: residual norms; Picard: H1 increments
  bool converged = false;
  std::string failure;
  double psi_min = 0.0;
  double psi_max = 0.0;
  bool in_W = false;  // velocity ball
  bool in_Z = false;  // potential ball
};

struct DiagnosticsReport {
  double small_data_1 = 0.0;  // ball-mapping condition, must be <= 1
  double small_data_2 = 0.0;  // contraction condition, must be < 1
  double small_data_3 = 0.0;  // discrete quasi-optimality condition, must be <= 1
  double w_radius = 0.0;
  double z_radius = 0.0;  // +inf when E = 0 ("unconditional")
  double f_norm = 0.0;
  double g_norm = 0.0;
  std::optional<double> u_norm;    // ||u_h||_1
  std::optional<double> psi_norm;  // ||psi_h||_1

  bool condition_1_holds() const { return small_data_1 <= 1.0; }
  bool condition_2_holds() const { return small_data_2 < 1.0; }
  bool condition_3_holds() const { return small_data_3 <= 1.0; }
  bool z_unconditional() const { return std::isinf(z_radius); }
  bool in_W() const { return u_norm && *u_norm <= w_radius; }
  bool in_Z() const { return psi_norm && *psi_norm <= z_radius; }
};

/// Evaluates the small-data conditions for given data norms.
inline DiagnosticsReport small_data_conditions(const ProblemConfig& cfg, double f_norm, double g_norm) {
  const double cp = cfg.poincare, cs = cfg.sobolev;
  const double mu = cfg.mu, eps = cfg.epsilon;
  const double e_bar = cfg.E_bar(), k_bar = cfg.K_bar();
  const double cp2 = cp * cp, cp4 = cp2 * cp2, cs2 = cs * cs;
  DiagnosticsReport r;
  r.f_norm = f_norm;
  r.g_norm = g_norm;
  r.small_data_1 = 4.0 * cp4 * cs2 / (mu * eps) * (1.0 + e_bar + 2.0 * k_bar * e_bar * cp2 / eps) * (f_norm + g_norm);
  r.small_data_2 = 4.0 * cp4 * cs2 * e_bar / (mu * eps * eps) * (eps + 2.0 * cp2 * k_bar) * g_norm;
  r.small_data_3 = (1.0 + 4.0 * k_bar * e_bar * cp2 / eps) * 4.0 * cs2 * cp2 * g_norm / eps;
  r.w_radius = eps / (2.0 * cp2 * cs2);
  r.z_radius = e_bar > 0.0 ? mu / (2.0 * cp2 * cs2 * e_bar) : std::numeric_limits<double>::infinity();
  return r;
}

namespace detail {

inline double data_l2_norm(const Mesh& mesh, int quad_degree, const std::function<double(const Vec2&)>& squared) {
  const QuadratureRule rule = triangle_rule(quad_degree);
  double sum = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const AffineMap map = affine_map(mesh, c);
    for (std::size_t q = 0; q < rule.size(); ++q) sum += rule.weights[q] * map.det * squared(map(rule.points[q]));
  }
  return std::sqrt(sum);
}

}  // namespace detail

/// Small-data diagnostics with ||f||_0, ||g||_0 computed by quadrature on
/// the mesh of `spaces`, and ball memberships of `state` when given.
inline DiagnosticsReport small_data_diagnostics(const TaylorHoodSpaces& spaces, const ProblemConfig& cfg,
                                                const SystemState* state = nullptr) {
  const Mesh& mesh = spaces.velocity.mesh();
  const int qd = quadrature_degree_for(cfg, spaces.k());
  const double fn = cfg.f ? detail::data_l2_norm(mesh, qd, [&](const Vec2& x) { return cfg.f(x).squaredNorm(); }) : 0.0;
  const double gn = cfg.g ? detail::data_l2_norm(mesh, qd, [&](const Vec2& x) { return cfg.g(x) * cfg.g(x); }) : 0.0;
  DiagnosticsReport r = small_data_conditions(cfg, fn, gn);
  if (state) {
    r.u_norm = h1_norm(spaces.velocity, state->u, qd);
    r.psi_norm = h1_norm(spaces.potential, state->psi, qd);
  }
  return r;
}

struct SolverOptions {
  double tol = 1e-7;
  int maxit = 25;
};

namespace detail {

inline void finish_report(const CoupledProblem& problem, const SystemState& state, NonlinearReport& report) {
  if (state.psi.size() > 0) {
    report.psi_min = state.psi.minCoeff();
    report.psi_max = state.psi.maxCoeff();
  }
  try {
    const DiagnosticsReport d = small_data_diagnostics(problem.spaces(), problem.config(), &state);
    report.in_W = d.in_W();
    report.in_Z = d.in_Z();
  } catch (const std::exception&) {
    report.in_W = report.in_Z = false;
  }
}

}  // namespace detail

/// Plain Newton-Raphson on the coupled system with the exact Jacobian.
/// At least one update is always taken; convergence is declared when the
/// Euclidean norm of the free-dof residual drops to `tol`.
inline NonlinearReport newton_solve(const CoupledProblem& problem, SystemState& state, const SolverOptions& opts = {}) {
  NonlinearReport report;
  try {
    SparseSystem sys = problem.linearize(state);
    report.residuals.push_back(sys.rhs.norm());
    while (true) {
      if (report.iterations >= opts.maxit) {
        report.failure = "Newton did not converge in " + std::to_string(opts.maxit) + " iterations";
        break;
      }
      const Vector delta = linear_solve(sys);
      problem.layout().add_increment(state, delta);
      ++report.iterations;
      sys = problem.linearize(state);
      const double r = sys.rhs.norm();
      report.residuals.push_back(r);
      if (!std::isfinite(r)) throw DivergenceError("non-finite residual");
      if (r <= opts.tol) {
        report.converged = true;
        break;
      }
    }
  } catch (const std::exception& e) {
    report.converged = false;
    report.failure = e.what();
  }
  detail::finish_report(problem, state, report);
  return report;
}

inline std::pair<SystemState, NonlinearReport> newton_solve(const TaylorHoodSpaces& spaces, const ProblemConfig& cfg,
                                                            const SolverOptions& opts = {},
                                                            const std::optional<SystemState>& initial = std::nullopt) {
  const CoupledProblem problem(spaces, cfg);
  SystemState state = initial ? *initial : problem.initial_state();
  if (initial) problem.lift(state);
  NonlinearReport report = newton_solve(problem, state, opts);
  return {std::move(state), std::move(report)};
}

/// Fixed-point iteration u_hat -> flow(elec(u_hat)).
///
/// Each outer step solves the nonlinear potential equation at frozen u_hat
/// (inner Newton, tolerance tol/10), then the linear Stokes problem with
/// the drag frozen at the new potential. Stops when the H1 norm of the
/// velocity increment is <= tol. `residuals` holds those increments.
inline NonlinearReport picard_solve(const CoupledProblem& problem, SystemState& state, const SolverOptions& opts = {}) {
  NonlinearReport report;
  const DofLayout& layout = problem.layout();
  const int s0 = layout.potential.offset, ns = layout.potential.size;
  const int f0 = layout.velocity.offset, nf = layout.velocity.size + layout.pressure.size;
  const int qd = problem.quadrature_degree();
  const FeSpace& V = problem.spaces().velocity;
  try {
    while (true) {
      if (report.iterations >= opts.maxit) {
        report.failure = "Picard did not converge in " + std::to_string(opts.maxit) + " iterations";
        break;
      }
      // potential subproblem
      bool inner_ok = false;
      for (int it = 0; it < opts.maxit; ++it) {
        const SparseSystem sys = problem.linearize(state);
        const Vector r = sys.rhs.segment(s0, ns);
        if (it > 0 && r.norm() <= opts.tol / 10.0) {
          inner_ok = true;
          break;
        }
        const SparseMatrix jac = sys.matrix.block(s0, s0, ns, ns);
        Vector delta = Vector::Zero(layout.size());
        delta.segment(s0, ns) = linear_solve(jac, r);
        layout.add_increment(state, delta);
      }
      if (!inner_ok) throw std::runtime_error("inner potential Newton did not converge");

      // flow subproblem: linear in (u, p), one exact Newton step
      const Vector u_old = state.u;
      const SparseSystem sys = problem.linearize(state);
      const SparseMatrix jac = sys.matrix.block(f0, f0, nf, nf);
      Vector delta = Vector::Zero(layout.size());
      delta.segment(f0, nf) = linear_solve(jac, Vector(sys.rhs.segment(f0, nf)));
      layout.add_increment(state, delta);
      ++report.iterations;

      const double inc = h1_norm(V, state.u - u_old, qd);
      report.residuals.push_back(inc);
      if (!std::isfinite(inc)) throw DivergenceError("non-finite Picard increment");
      if (inc <= opts.tol) {
        report.converged = true;
        break;
      }
    }
  } catch (const std::exception& e) {
    report.converged = false;
    report.failure = e.what();
  }
  detail::finish_report(problem, state, report);
  return report;
}

inline std::pair<SystemState, NonlinearReport> picard_solve(const TaylorHoodSpaces& spaces, const ProblemConfig& cfg,
                                                            const SolverOptions& opts = {}) {
  const CoupledProblem problem(spaces, cfg);
  SystemState state = problem.initial_state();
  NonlinearReport report = picard_solve(problem, state, opts);
  return {std::move(state), std::move(report)};
}

}  // namespace spb
