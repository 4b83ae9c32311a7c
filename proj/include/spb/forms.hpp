#pragma once

// Variational forms of the Stokes / Poisson-Boltzmann system.
//
// Momentum:   a(u,v) + A^psi(u,v) + b(v,p) = F^psi(v) + <traction, v>_{Gamma_N}
// Mass:       b(u,q) = 0
// Potential:  (kappa(psi), phi) + c(u; psi, phi) + d(psi, phi) = G(phi) + <flux, phi>_{Gamma_N}
//
// with
//   a(u,v)      = mu (grad u, grad v)
//   b(v,q)      = -(div v, q)
//   c(w; s, t)  = ((w . grad s), t)
//   d(s,t)      = eps (grad s, grad t)
//   A^s(u,v)    = ((u . grad s), (E . v))
//   F^s(v)      = (f + (g - kappa(s)) E, v)
//   G(t)        = (g, t)
//
// The electric drag -eps lap(psi) E never appears: it is replaced through the
// potential equation by (g - kappa(psi) - u . grad psi) E, which gives the
// A^psi and F^psi terms above.

#include "spb/fe_space.hpp"
#include "spb/mesh.hpp"
#include "spb/quadrature.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spb {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

using ScalarFunction = std::function<double(const Vec2&)>;
using VectorFunction = std::function<Vec2(const Vec2&)>;
using TractionFunction = std::function<Vec2(const Vec2& x, const Vec2& normal)>;
using FluxFunction = std::function<double(const Vec2& x, const Vec2& normal)>;

/// Raised when the nonlinear charge law overflows (|k1 psi| too large).
class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Physical coefficients and data. Empty data functions mean zero.
struct ProblemConfig {
  double mu = 1.0;
  double epsilon = 1.0;
  double k0 = 1.0;
  double k1 = 1.0;
  Vec2 E{0.0, -1.0};

  VectorFunction f;
  ScalarFunction g;
  VectorFunction velocity_bc;  // Dirichlet data on Gamma_D (flow)
  ScalarFunction potential_bc;  // Dirichlet data on Gamma_D (potential)
  TractionFunction traction;   // (mu grad u - p I) n on Gamma_N
  FluxFunction flux;           // eps grad psi . n on Gamma_N

  // Used by diagnostics only.
  double alpha = -1.0;
  double beta = 1.0;
  std::optional<double> kappa_lipschitz;     // K-bar
  std::optional<double> kappa_monotonicity;  // K-underbar
  double poincare = 1.0;                     // C_p
  double sobolev = 1.0;                      // C_Sob

  int quadrature_degree = 0;  // 0: 2(k+1)+2

  /// |E|_inf
  double E_bar() const { return std::max(std::abs(E.x()), std::abs(E.y())); }

  /// Lipschitz constant of kappa on [alpha, beta] unless supplied.
  double K_bar() const {
    if (kappa_lipschitz) return *kappa_lipschitz;
    return k0 * k1 * std::cosh(k1 * std::max(std::abs(alpha), std::abs(beta)));
  }

  void validate() const {
    if (!(mu > 0.0)) throw ConfigError("mu must be > 0");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    if (!(k0 > 0.0)) throw ConfigError("k0 must be > 0");
    if (!(k1 > 0.0)) throw ConfigError("k1 must be > 0");
    if (!(alpha <= 0.0 && 0.0 <= beta)) throw ConfigError("alpha, beta must satisfy alpha <= 0 <= beta");
    if (kappa_lipschitz && kappa_monotonicity && !(*kappa_lipschitz >= *kappa_monotonicity && *kappa_monotonicity > 0.0))
      throw ConfigError("K_upper, K_lower must satisfy K_upper >= K_lower > 0");
    if (!(poincare > 0.0) || !(sobolev > 0.0)) throw ConfigError("C_p, C_sob must be > 0");
  }
};

inline int default_quadrature_degree(int k) { return 2 * (k + 1) + 2; }

inline int quadrature_degree_for(const ProblemConfig& cfg, int k) {
  return cfg.quadrature_degree > 0 ? cfg.quadrature_degree : default_quadrature_degree(k);
}

inline double kappa(double s, const ProblemConfig& cfg) {
  const double v = cfg.k0 * std::sinh(cfg.k1 * s);
  if (!std::isfinite(v)) throw DivergenceError("kappa overflow at psi = " + std::to_string(s));
  return v;
}

inline double kappa_prime(double s, const ProblemConfig& cfg) {
  const double v = cfg.k0 * cfg.k1 * std::cosh(cfg.k1 * s);
  if (!std::isfinite(v)) throw DivergenceError("kappa' overflow at psi = " + std::to_string(s));
  return v;
}

namespace detail {

using GradMatrix = Eigen::Matrix<double, Eigen::Dynamic, 2>;

inline int block_quadrature_degree(const FeSpace& space) {
  return std::min(kMaxQuadratureDegree, 2 * space.degree() + 2);
}

/// Physical basis gradients on one cell at every quadrature point.
struct CellGeometry {
  AffineMap map;
  std::vector<GradMatrix> grads;

  void reinit(const Mesh& mesh, int cell, const Tabulation& tab) {
    map = affine_map(mesh, cell);
    grads.resize(tab.ref_grads.size());
    const Mat2 it_t = map.inverse_transpose.transpose();
    for (std::size_t q = 0; q < tab.ref_grads.size(); ++q) grads[q] = tab.ref_grads[q] * it_t;
  }
};

inline ScalarValue scalar_at(const Vector& coeffs, std::span<const int> dofs, const Vector& phi, const GradMatrix& dphi) {
  ScalarValue out;
  for (Eigen::Index i = 0; i < phi.size(); ++i) {
    const double ci = coeffs(dofs[static_cast<std::size_t>(i)]);
    out.value += ci * phi(i);
    out.grad += ci * dphi.row(i).transpose();
  }
  return out;
}

inline VectorValue vector_at(const FeSpace& space, const Vector& coeffs, std::span<const int> dofs, const Vector& phi,
                             const GradMatrix& dphi) {
  VectorValue out;
  for (int comp = 0; comp < 2; ++comp) {
    for (Eigen::Index i = 0; i < phi.size(); ++i) {
      const double ci = coeffs(space.dof(dofs[static_cast<std::size_t>(i)], comp));
      out.value(comp) += ci * phi(i);
      out.grad.row(comp) += ci * dphi.row(i);
    }
  }
  return out;
}

inline SparseMatrix from_triplets(int rows, int cols, const std::vector<Triplet>& triplets) {
  SparseMatrix m(rows, cols);
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

inline Vec2 eval_or_zero(const VectorFunction& f, const Vec2& x) { return f ? f(x) : Vec2::Zero(); }
inline double eval_or_zero(const ScalarFunction& f, const Vec2& x) { return f ? f(x) : 0.0; }

/// Shared scalar stiffness pattern for a and d.
inline SparseMatrix assemble_scaled_stiffness(const FeSpace& space, double scale) {
  const QuadratureRule rule = triangle_rule(block_quadrature_degree(space));
  const Tabulation tab(space.element(), rule);
  const int n = space.num_local();
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(space.mesh().num_cells() * n * n * space.components()));
  CellGeometry geo;
  Eigen::MatrixXd local(n, n);
  for (int c = 0; c < space.mesh().num_cells(); ++c) {
    geo.reinit(space.mesh(), c, tab);
    local.setZero();
    for (std::size_t q = 0; q < rule.size(); ++q)
      local.noalias() += (scale * rule.weights[q] * geo.map.det) * geo.grads[q] * geo.grads[q].transpose();
    const auto dofs = space.cell_dofs(c);
    for (int comp = 0; comp < space.components(); ++comp)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          trip.emplace_back(space.dof(dofs[static_cast<std::size_t>(i)], comp),
                            space.dof(dofs[static_cast<std::size_t>(j)], comp), local(i, j));
  }
  return from_triplets(space.num_dofs(), space.num_dofs(), trip);
}

}  // namespace detail

/// a(u, v) = mu (grad u, grad v) on the full (unconstrained) velocity space.
inline SparseMatrix assemble_a(const FeSpace& velocity, double mu) {
  return detail::assemble_scaled_stiffness(velocity, mu);
}

/// d(psi, phi) = eps (grad psi, grad phi) on the full potential space.
inline SparseMatrix assemble_d(const FeSpace& potential, double epsilon) {
  return detail::assemble_scaled_stiffness(potential, epsilon);
}

/// Scalar (or componentwise) mass matrix.
inline SparseMatrix assemble_mass(const FeSpace& space) {
  const QuadratureRule rule = triangle_rule(detail::block_quadrature_degree(space));
  const Tabulation tab(space.element(), rule);
  const int n = space.num_local();
  std::vector<Triplet> trip;
  Eigen::MatrixXd local(n, n);
  for (int c = 0; c < space.mesh().num_cells(); ++c) {
    const double det = affine_map(space.mesh(), c).det;
    local.setZero();
    for (std::size_t q = 0; q < rule.size(); ++q)
      local.noalias() += (rule.weights[q] * det) * tab.values[q] * tab.values[q].transpose();
    const auto dofs = space.cell_dofs(c);
    for (int comp = 0; comp < space.components(); ++comp)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          trip.emplace_back(space.dof(dofs[static_cast<std::size_t>(i)], comp),
                            space.dof(dofs[static_cast<std::size_t>(j)], comp), local(i, j));
  }
  return detail::from_triplets(space.num_dofs(), space.num_dofs(), trip);
}

/// B with q^T B v = b(v, q) = -(div v, q); rows are pressure dofs.
inline SparseMatrix assemble_b(const FeSpace& velocity, const FeSpace& pressure) {
  if (&velocity.mesh() != &pressure.mesh()) throw std::invalid_argument("assemble_b: spaces on different meshes");
  const QuadratureRule rule = triangle_rule(std::min(kMaxQuadratureDegree, velocity.degree() + pressure.degree()));
  const Tabulation vtab(velocity.element(), rule);
  const Tabulation ptab(pressure.element(), rule);
  std::vector<Triplet> trip;
  detail::CellGeometry geo;
  for (int c = 0; c < velocity.mesh().num_cells(); ++c) {
    geo.reinit(velocity.mesh(), c, vtab);
    const auto vd = velocity.cell_dofs(c);
    const auto pd = pressure.cell_dofs(c);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double w = rule.weights[q] * geo.map.det;
      for (int i = 0; i < pressure.num_local(); ++i)
        for (int comp = 0; comp < 2; ++comp)
          for (int j = 0; j < velocity.num_local(); ++j)
            trip.emplace_back(pd[static_cast<std::size_t>(i)], velocity.dof(vd[static_cast<std::size_t>(j)], comp),
                              -w * ptab.values[q](i) * geo.grads[q](j, comp));
    }
  }
  return detail::from_triplets(pressure.num_dofs(), velocity.num_dofs(), trip);
}

/// A with v^T A u = A^{psi_hat}(u, v) = ((u . grad psi_hat), (E . v)).
inline SparseMatrix assemble_A_psi(const FeSpace& velocity, const FeSpace& potential, const Vector& psi_hat,
                                   const Vec2& E) {
  const QuadratureRule rule = triangle_rule(std::min(kMaxQuadratureDegree, 2 * velocity.degree() + potential.degree()));
  const Tabulation vtab(velocity.element(), rule);
  const Tabulation stab(potential.element(), rule);
  std::vector<Triplet> trip;
  detail::CellGeometry vgeo, sgeo;
  for (int c = 0; c < velocity.mesh().num_cells(); ++c) {
    vgeo.reinit(velocity.mesh(), c, vtab);
    sgeo.reinit(potential.mesh(), c, stab);
    const auto vd = velocity.cell_dofs(c);
    const auto sd = potential.cell_dofs(c);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double w = rule.weights[q] * vgeo.map.det;
      const Vec2 grad_psi = detail::scalar_at(psi_hat, sd, stab.values[q], sgeo.grads[q]).grad;
      for (int ic = 0; ic < 2; ++ic)
        for (int i = 0; i < velocity.num_local(); ++i)
          for (int jc = 0; jc < 2; ++jc)
            for (int j = 0; j < velocity.num_local(); ++j) {
              const double val = w * vtab.values[q](j) * grad_psi(jc) * E(ic) * vtab.values[q](i);
              trip.emplace_back(velocity.dof(vd[static_cast<std::size_t>(i)], ic),
                                velocity.dof(vd[static_cast<std::size_t>(j)], jc), val);
            }
    }
  }
  return detail::from_triplets(velocity.num_dofs(), velocity.num_dofs(), trip);
}

/// C with t^T C s = c(u_hat; s, t) = ((u_hat . grad s), t).
inline SparseMatrix assemble_c(const FeSpace& velocity, const Vector& u_hat, const FeSpace& potential) {
  const QuadratureRule rule = triangle_rule(std::min(kMaxQuadratureDegree, 2 * potential.degree() + velocity.degree()));
  const Tabulation vtab(velocity.element(), rule);
  const Tabulation stab(potential.element(), rule);
  std::vector<Triplet> trip;
  detail::CellGeometry vgeo, sgeo;
  for (int c = 0; c < velocity.mesh().num_cells(); ++c) {
    vgeo.reinit(velocity.mesh(), c, vtab);
    sgeo.reinit(potential.mesh(), c, stab);
    const auto vd = velocity.cell_dofs(c);
    const auto sd = potential.cell_dofs(c);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double w = rule.weights[q] * vgeo.map.det;
      const Vec2 uq = detail::vector_at(velocity, u_hat, vd, vtab.values[q], vgeo.grads[q]).value;
      const Vector adv = sgeo.grads[q] * uq;
      for (int i = 0; i < potential.num_local(); ++i)
        for (int j = 0; j < potential.num_local(); ++j)
          trip.emplace_back(sd[static_cast<std::size_t>(i)], sd[static_cast<std::size_t>(j)],
                            w * adv(j) * stab.values[q](i));
    }
  }
  return detail::from_triplets(potential.num_dofs(), potential.num_dofs(), trip);
}

/// F^{psi_hat}(v) = (f + (g - kappa(psi_hat)) E, v).
inline Vector assemble_F_psi(const FeSpace& velocity, const FeSpace& potential, const Vector& psi_hat,
                             const ProblemConfig& cfg, int quad_degree) {
  const QuadratureRule rule = triangle_rule(quad_degree);
  const Tabulation vtab(velocity.element(), rule);
  const Tabulation stab(potential.element(), rule);
  Vector out = Vector::Zero(velocity.num_dofs());
  for (int c = 0; c < velocity.mesh().num_cells(); ++c) {
    const AffineMap map = affine_map(velocity.mesh(), c);
    const auto vd = velocity.cell_dofs(c);
    const auto sd = potential.cell_dofs(c);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double w = rule.weights[q] * map.det;
      const Vec2 x = map(rule.points[q]);
      double psi = 0.0;
      for (int i = 0; i < potential.num_local(); ++i) psi += psi_hat(sd[static_cast<std::size_t>(i)]) * stab.values[q](i);
      const Vec2 load = detail::eval_or_zero(cfg.f, x) + (detail::eval_or_zero(cfg.g, x) - kappa(psi, cfg)) * cfg.E;
      for (int comp = 0; comp < 2; ++comp)
        for (int i = 0; i < velocity.num_local(); ++i)
          out(velocity.dof(vd[static_cast<std::size_t>(i)], comp)) += w * load(comp) * vtab.values[q](i);
    }
  }
  return out;
}

/// G(phi) = (g, phi).
inline Vector assemble_G(const FeSpace& potential, const ScalarFunction& g, int quad_degree) {
  const QuadratureRule rule = triangle_rule(quad_degree);
  const Tabulation tab(potential.element(), rule);
  Vector out = Vector::Zero(potential.num_dofs());
  if (!g) return out;
  for (int c = 0; c < potential.mesh().num_cells(); ++c) {
    const AffineMap map = affine_map(potential.mesh(), c);
    const auto sd = potential.cell_dofs(c);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double wg = rule.weights[q] * map.det * g(map(rule.points[q]));
      for (int i = 0; i < potential.num_local(); ++i) out(sd[static_cast<std::size_t>(i)]) += wg * tab.values[q](i);
    }
  }
  return out;
}

/// Entries (kappa(psi_h), phi_i).
inline Vector assemble_kappa_residual(const FeSpace& potential, const Vector& psi, const ProblemConfig& cfg,
                                      int quad_degree) {
  const QuadratureRule rule = triangle_rule(quad_degree);
  const Tabulation tab(potential.element(), rule);
  Vector out = Vector::Zero(potential.num_dofs());
  for (int c = 0; c < potential.mesh().num_cells(); ++c) {
    const double det = affine_map(potential.mesh(), c).det;
    const auto sd = potential.cell_dofs(c);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      double s = 0.0;
      for (int i = 0; i < potential.num_local(); ++i) s += psi(sd[static_cast<std::size_t>(i)]) * tab.values[q](i);
      const double v = kappa(s, cfg);
      for (int i = 0; i < potential.num_local(); ++i)
        out(sd[static_cast<std::size_t>(i)]) += rule.weights[q] * det * v * tab.values[q](i);
    }
  }
  return out;
}

/// Entries (kappa'(psi_h) phi_j, phi_i).
inline SparseMatrix assemble_kappa_jacobian(const FeSpace& potential, const Vector& psi, const ProblemConfig& cfg,
                                            int quad_degree) {
  const QuadratureRule rule = triangle_rule(quad_degree);
  const Tabulation tab(potential.element(), rule);
  const int n = potential.num_local();
  std::vector<Triplet> trip;
  Eigen::MatrixXd local(n, n);
  for (int c = 0; c < potential.mesh().num_cells(); ++c) {
    const double det = affine_map(potential.mesh(), c).det;
    const auto sd = potential.cell_dofs(c);
    local.setZero();
    for (std::size_t q = 0; q < rule.size(); ++q) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += psi(sd[static_cast<std::size_t>(i)]) * tab.values[q](i);
      local.noalias() += (rule.weights[q] * det * kappa_prime(s, cfg)) * tab.values[q] * tab.values[q].transpose();
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) trip.emplace_back(sd[static_cast<std::size_t>(i)], sd[static_cast<std::size_t>(j)], local(i, j));
  }
  return detail::from_triplets(potential.num_dofs(), potential.num_dofs(), trip);
}

struct NeumannLoads {
  Vector momentum;   // full velocity space
  Vector potential;  // full potential space
};

/// Boundary integrals of the traction (mu grad u - p I) n against v and the
/// flux eps grad psi . n against phi over the Neumann facets of each field.
inline NeumannLoads assemble_neumann_loads(const FeSpace& velocity, const FeSpace& potential, const ProblemConfig& cfg,
                                           int quad_degree) {
  const QuadratureRule rule = edge_rule(std::min(kMaxQuadratureDegree, quad_degree));
  static const std::array<Vec2, 3> corners{Vec2(0.0, 0.0), Vec2(1.0, 0.0), Vec2(0.0, 1.0)};
  NeumannLoads out{Vector::Zero(velocity.num_dofs()), Vector::Zero(potential.num_dofs())};
  const Mesh& mesh = velocity.mesh();
  Vector phi;
  detail::GradMatrix dphi;
  for (const Facet& facet : mesh.facets()) {
    const bool flow = facet.tag.flow == BoundaryKind::neumann && cfg.traction;
    const bool pot = facet.tag.potential == BoundaryKind::neumann && cfg.flux;
    if (!flow && !pot) continue;
    const AffineMap map = affine_map(mesh, facet.cell);
    const Vec2& a = corners[static_cast<std::size_t>(facet.local_edge)];
    const Vec2& b = corners[static_cast<std::size_t>((facet.local_edge + 1) % 3)];
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Vec2 ref = a + rule.points[q].x() * (b - a);
      const Vec2 x = map(ref);
      const double w = rule.weights[q] * facet.length;
      if (flow) {
        const Vec2 t = cfg.traction(x, facet.normal);
        velocity.element().tabulate(ref, phi, dphi);
        const auto vd = velocity.cell_dofs(facet.cell);
        for (int comp = 0; comp < 2; ++comp)
          for (int i = 0; i < velocity.num_local(); ++i)
            out.momentum(velocity.dof(vd[static_cast<std::size_t>(i)], comp)) += w * t(comp) * phi(i);
      }
      if (pot) {
        const double h = cfg.flux(x, facet.normal);
        potential.element().tabulate(ref, phi, dphi);
        const auto sd = potential.cell_dofs(facet.cell);
        for (int i = 0; i < potential.num_local(); ++i) out.potential(sd[static_cast<std::size_t>(i)]) += w * h * phi(i);
      }
    }
  }
  return out;
}

/// Contiguous index range of one field inside the free-dof vector.
struct BlockRange {
  int offset = 0;
  int size = 0;
};

/// Assembled linear system over the free dofs, ordered [u | p | psi].
struct SparseSystem {
  SparseMatrix matrix;
  Vector rhs;
  BlockRange velocity;
  BlockRange pressure;
  BlockRange potential;
};

/// Maps full field dofs to free system indices (-1 when constrained).
class DofLayout {
public:
  explicit DofLayout(const TaylorHoodSpaces& spaces) {
    auto number = [this](const FeSpace& space, std::vector<int>& map, BlockRange& range) {
      range.offset = size_;
      map.assign(static_cast<std::size_t>(space.num_dofs()), -1);
      for (int i = 0; i < space.num_dofs(); ++i)
        if (!space.is_dirichlet(i)) map[static_cast<std::size_t>(i)] = size_++;
      range.size = size_ - range.offset;
    };
    number(spaces.velocity, u_, velocity);
    number(spaces.pressure, p_, pressure);
    number(spaces.potential, psi_, potential);
  }

  int size() const { return size_; }
  int u(int dof) const { return u_[static_cast<std::size_t>(dof)]; }
  int p(int dof) const { return p_[static_cast<std::size_t>(dof)]; }
  int psi(int dof) const { return psi_[static_cast<std::size_t>(dof)]; }

  /// Adds a free-dof increment into the full coefficient vectors.
  void add_increment(SystemState& state, const Vector& delta, double scale = 1.0) const {
    for (std::size_t i = 0; i < u_.size(); ++i)
      if (u_[i] >= 0) state.u(static_cast<Eigen::Index>(i)) += scale * delta(u_[i]);
    for (std::size_t i = 0; i < p_.size(); ++i) state.p(static_cast<Eigen::Index>(i)) += scale * delta(p_[i]);
    for (std::size_t i = 0; i < psi_.size(); ++i)
      if (psi_[i] >= 0) state.psi(static_cast<Eigen::Index>(i)) += scale * delta(psi_[i]);
  }

  BlockRange velocity;
  BlockRange pressure;
  BlockRange potential;

private:
  int size_ = 0;
  std::vector<int> u_, p_, psi_;
};

/// Residual and Jacobian of the fully coupled discrete system.
class CoupledProblem {
public:
  CoupledProblem(const TaylorHoodSpaces& spaces, ProblemConfig cfg)
      : spaces_(spaces),
        cfg_(std::move(cfg)),
        layout_(spaces_),
        rule_(triangle_rule(quadrature_degree_for(cfg_, spaces_.k()))),
        vtab_(spaces_.velocity.element(), rule_),
        ptab_(spaces_.pressure.element(), rule_),
        stab_(spaces_.potential.element(), rule_),
        neumann_(assemble_neumann_loads(spaces_.velocity, spaces_.potential, cfg_, quadrature_degree_for(cfg_, spaces_.k()))) {}

  const TaylorHoodSpaces& spaces() const { return spaces_; }
  const ProblemConfig& config() const { return cfg_; }
  const DofLayout& layout() const { return layout_; }
  int quadrature_degree() const { return quadrature_degree_for(cfg_, spaces_.k()); }

  /// Zero state with Dirichlet entries set to the boundary data interpolant.
  SystemState initial_state() const {
    SystemState s{Vector::Zero(spaces_.velocity.num_dofs()), Vector::Zero(spaces_.pressure.num_dofs()),
                  Vector::Zero(spaces_.potential.num_dofs())};
    lift(s);
    return s;
  }

  void lift(SystemState& s) const {
    if (cfg_.velocity_bc) apply_dirichlet(spaces_.velocity, s.u, cfg_.velocity_bc);
    if (cfg_.potential_bc) apply_dirichlet(spaces_.potential, s.psi, cfg_.potential_bc);
  }

  Vector residual(const SystemState& s) const { return assemble(s, false).rhs * -1.0; }

  /// Jacobian in `matrix`, negative residual in `rhs`.
  SparseSystem linearize(const SystemState& s) const { return assemble(s, true); }

  SparseSystem assemble(const SystemState& s, bool with_jacobian) const {
    const FeSpace& V = spaces_.velocity;
    const FeSpace& Q = spaces_.pressure;
    const FeSpace& S = spaces_.potential;
    const Mesh& mesh = V.mesh();
    const int nv = V.num_local(), np = Q.num_local(), ns = S.num_local();
    const int nloc = 2 * nv + np + ns;
    const int p0 = 2 * nv, s0 = 2 * nv + np;
    const Vec2& E = cfg_.E;

    Vector res = Vector::Zero(layout_.size());
    std::vector<Triplet> trip;
    if (with_jacobian) trip.reserve(static_cast<std::size_t>(mesh.num_cells()) * static_cast<std::size_t>(nloc * nloc));

    std::vector<int> rows(static_cast<std::size_t>(nloc));
    Vector r_loc(nloc);
    Eigen::MatrixXd j_loc(nloc, nloc);
    detail::CellGeometry vgeo, pgeo, sgeo;

    for (int c = 0; c < mesh.num_cells(); ++c) {
      vgeo.reinit(mesh, c, vtab_);
      pgeo.reinit(mesh, c, ptab_);
      sgeo.reinit(mesh, c, stab_);
      const auto vd = V.cell_dofs(c);
      const auto pd = Q.cell_dofs(c);
      const auto sd = S.cell_dofs(c);
      for (int i = 0; i < nv; ++i) {
        rows[static_cast<std::size_t>(i)] = layout_.u(V.dof(vd[static_cast<std::size_t>(i)], 0));
        rows[static_cast<std::size_t>(nv + i)] = layout_.u(V.dof(vd[static_cast<std::size_t>(i)], 1));
      }
      for (int i = 0; i < np; ++i) rows[static_cast<std::size_t>(p0 + i)] = layout_.p(pd[static_cast<std::size_t>(i)]);
      for (int i = 0; i < ns; ++i) rows[static_cast<std::size_t>(s0 + i)] = layout_.psi(sd[static_cast<std::size_t>(i)]);

      r_loc.setZero();
      if (with_jacobian) j_loc.setZero();

      for (std::size_t q = 0; q < rule_.size(); ++q) {
        const double w = rule_.weights[q] * vgeo.map.det;
        const Vec2 x = vgeo.map(rule_.points[q]);
        const Vector& phi = vtab_.values[q];
        const detail::GradMatrix& dphi = vgeo.grads[q];
        const Vector& chi = ptab_.values[q];
        const Vector& theta = stab_.values[q];
        const detail::GradMatrix& dtheta = sgeo.grads[q];

        const VectorValue u = detail::vector_at(V, s.u, vd, phi, dphi);
        const double p = detail::scalar_at(s.p, pd, chi, pgeo.grads[q]).value;
        const ScalarValue psi = detail::scalar_at(s.psi, sd, theta, dtheta);
        const double kap = kappa(psi.value, cfg_);
        const Vec2 f = detail::eval_or_zero(cfg_.f, x);
        const double g = detail::eval_or_zero(cfg_.g, x);
        const double div_u = u.grad.trace();
        const double u_dot_grad_psi = u.value.dot(psi.grad);

        // momentum
        for (int comp = 0; comp < 2; ++comp) {
          const Vec2 grad_uc = u.grad.row(comp).transpose();
          const double load = f(comp) + (g - kap) * E(comp) - u_dot_grad_psi * E(comp);
          for (int i = 0; i < nv; ++i)
            r_loc(comp * nv + i) += w * (cfg_.mu * grad_uc.dot(dphi.row(i)) - p * dphi(i, comp) - load * phi(i));
        }
        // mass
        for (int i = 0; i < np; ++i) r_loc(p0 + i) -= w * div_u * chi(i);
        // potential
        const double src = kap + u_dot_grad_psi - g;
        for (int i = 0; i < ns; ++i)
          r_loc(s0 + i) += w * (src * theta(i) + cfg_.epsilon * psi.grad.dot(dtheta.row(i)));

        if (!with_jacobian) continue;

        const double dkap = kappa_prime(psi.value, cfg_);
        const Eigen::MatrixXd stiff_v = (w * cfg_.mu) * dphi * dphi.transpose();
        const Vector adv_theta = dtheta * u.value;  // u . grad theta_j
        for (int ic = 0; ic < 2; ++ic) {
          for (int i = 0; i < nv; ++i) {
            const int row = ic * nv + i;
            const double e_phi = w * E(ic) * phi(i);
            for (int jc = 0; jc < 2; ++jc) {
              const double coupling = e_phi * psi.grad(jc);
              for (int j = 0; j < nv; ++j) {
                double v = coupling * phi(j);
                if (ic == jc) v += stiff_v(i, j);
                j_loc(row, jc * nv + j) += v;
              }
            }
            for (int j = 0; j < np; ++j) j_loc(row, p0 + j) -= w * chi(j) * dphi(i, ic);
            for (int j = 0; j < ns; ++j) j_loc(row, s0 + j) += e_phi * (adv_theta(j) + dkap * theta(j));
          }
        }
        for (int i = 0; i < np; ++i)
          for (int jc = 0; jc < 2; ++jc)
            for (int j = 0; j < nv; ++j) j_loc(p0 + i, jc * nv + j) -= w * dphi(j, jc) * chi(i);
        for (int i = 0; i < ns; ++i) {
          const double wt = w * theta(i);
          for (int jc = 0; jc < 2; ++jc)
            for (int j = 0; j < nv; ++j) j_loc(s0 + i, jc * nv + j) += wt * phi(j) * psi.grad(jc);
          for (int j = 0; j < ns; ++j)
            j_loc(s0 + i, s0 + j) +=
                wt * (dkap * theta(j) + adv_theta(j)) + w * cfg_.epsilon * dtheta.row(j).dot(dtheta.row(i));
        }
      }

      for (int i = 0; i < nloc; ++i) {
        const int row = rows[static_cast<std::size_t>(i)];
        if (row < 0) continue;
        res(row) += r_loc(i);
        if (!with_jacobian) continue;
        for (int j = 0; j < nloc; ++j) {
          const int col = rows[static_cast<std::size_t>(j)];
          if (col >= 0) trip.emplace_back(row, col, j_loc(i, j));
        }
      }
    }

    // Neumann data enters with a minus sign (it sits on the right-hand side).
    for (int i = 0; i < V.num_dofs(); ++i)
      if (const int row = layout_.u(i); row >= 0) res(row) -= neumann_.momentum(i);
    for (int i = 0; i < S.num_dofs(); ++i)
      if (const int row = layout_.psi(i); row >= 0) res(row) -= neumann_.potential(i);

    SparseSystem sys;
    sys.velocity = layout_.velocity;
    sys.pressure = layout_.pressure;
    sys.potential = layout_.potential;
    sys.rhs = -res;
    if (with_jacobian) sys.matrix = detail::from_triplets(layout_.size(), layout_.size(), trip);
    return sys;
  }

private:
  TaylorHoodSpaces spaces_;
  ProblemConfig cfg_;
  DofLayout layout_;
  QuadratureRule rule_;
  Tabulation vtab_, ptab_, stab_;
  NeumannLoads neumann_;
};

}  // namespace spb
