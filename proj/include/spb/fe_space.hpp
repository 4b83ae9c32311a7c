#pragma once

// Continuous Lagrange spaces on triangle meshes.

#include "spb/mesh.hpp"
#include "spb/quadrature.hpp"

#include <Eigen/Dense>

#include <memory>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace spb {

using Vector = Eigen::VectorXd;

/// Equispaced Lagrange element of degree m on the reference triangle.
///
/// Local node order: the three vertices, then m-1 nodes on each local edge
/// e (walking from local vertex e to local vertex (e+1)%3), then interior
/// nodes. Basis functions use the barycentric product form
///   phi_a = prod_c prod_{s<a_c} (m lambda_c - s) / (s + 1).
class LagrangeElement {
public:
  explicit LagrangeElement(int degree) : degree_(degree) {
    if (degree < 1) throw std::invalid_argument("Lagrange degree must be >= 1");
    const int m = degree;
    for (int c = 0; c < 3; ++c) {
      std::array<int, 3> a{0, 0, 0};
      a[static_cast<std::size_t>(c)] = m;
      index_.push_back(a);
    }
    for (int e = 0; e < 3; ++e) {
      for (int j = 1; j < m; ++j) {
        std::array<int, 3> a{0, 0, 0};
        a[static_cast<std::size_t>(e)] = m - j;
        a[static_cast<std::size_t>((e + 1) % 3)] = j;
        index_.push_back(a);
      }
    }
    for (int a1 = 1; a1 < m; ++a1)
      for (int a2 = 1; a1 + a2 < m; ++a2) index_.push_back({m - a1 - a2, a1, a2});
  }

  int degree() const { return degree_; }
  int num_nodes() const { return static_cast<int>(index_.size()); }
  int num_interior() const { return (degree_ - 1) * (degree_ - 2) / 2; }

  Vec2 node(int i) const {
    const auto& a = index_[static_cast<std::size_t>(i)];
    return {static_cast<double>(a[1]) / degree_, static_cast<double>(a[2]) / degree_};
  }

  /// Values and reference gradients of all basis functions at `ref`.
  void tabulate(const Vec2& ref, Vector& values, Eigen::Matrix<double, Eigen::Dynamic, 2>& grads) const {
    const int n = num_nodes();
    values.resize(n);
    grads.resize(n, 2);
    const std::array<double, 3> lambda{1.0 - ref.x() - ref.y(), ref.x(), ref.y()};
    static const std::array<Vec2, 3> dlambda{Vec2(-1.0, -1.0), Vec2(1.0, 0.0), Vec2(0.0, 1.0)};
    for (int i = 0; i < n; ++i) {
      const auto& a = index_[static_cast<std::size_t>(i)];
      std::array<double, 3> f{};
      std::array<double, 3> df{};
      for (std::size_t c = 0; c < 3; ++c) {
        // f_c = prod_{s<a_c} (m l - s)/(s+1) and its derivative in l
        double val = 1.0, der = 0.0;
        for (int s = 0; s < a[c]; ++s) {
          const double factor = (degree_ * lambda[c] - s) / (s + 1);
          der = der * factor + val * degree_ / (s + 1);
          val *= factor;
        }
        f[c] = val;
        df[c] = der;
      }
      values(i) = f[0] * f[1] * f[2];
      const Vec2 g = df[0] * f[1] * f[2] * dlambda[0] + f[0] * df[1] * f[2] * dlambda[1] + f[0] * f[1] * df[2] * dlambda[2];
      grads.row(i) = g.transpose();
    }
  }

private:
  int degree_;
  std::vector<std::array<int, 3>> index_;
};

/// Basis values and reference gradients at every point of a quadrature rule.
struct Tabulation {
  std::vector<Vector> values;
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, 2>> ref_grads;

  Tabulation(const LagrangeElement& element, const QuadratureRule& rule) {
    values.resize(rule.size());
    ref_grads.resize(rule.size());
    for (std::size_t q = 0; q < rule.size(); ++q) element.tabulate(rule.points[q], values[q], ref_grads[q]);
  }
};

/// Continuous P_m space (scalar or 2-vector) with Dirichlet mask for one field.
///
/// Scalar numbering: vertices, then (m-1) nodes per edge in edge-table order
/// oriented from the lower to the higher vertex index, then cell interiors.
/// Vector dofs are component-blocked: dof(i, c) = c * num_scalar_dofs() + i.
class FeSpace {
public:
  FeSpace(std::shared_ptr<const Mesh> mesh, int degree, int components, Field field)
      : mesh_(std::move(mesh)), element_(degree), components_(components), field_(field) {
    if (!mesh_) throw std::invalid_argument("FeSpace needs a mesh");
    if (components != 1 && components != 2) throw std::invalid_argument("FeSpace supports 1 or 2 components");
    const Mesh& m = *mesh_;
    const int per_edge = degree - 1;
    const int per_cell = element_.num_interior();
    const int nv = m.num_vertices();
    const int edge_base = nv;
    const int cell_base = edge_base + per_edge * m.num_edges();
    num_scalar_ = cell_base + per_cell * m.num_cells();
    local_ = element_.num_nodes();

    cell_dofs_.resize(static_cast<std::size_t>(local_ * m.num_cells()));
    nodes_.assign(static_cast<std::size_t>(num_scalar_), Vec2::Zero());
    for (int c = 0; c < m.num_cells(); ++c) {
      const auto& t = m.cell(c);
      int* dofs = &cell_dofs_[static_cast<std::size_t>(local_ * c)];
      int l = 0;
      for (int v = 0; v < 3; ++v) dofs[l++] = t[static_cast<std::size_t>(v)];
      for (int e = 0; e < 3; ++e) {
        const int id = m.cell_edge(c, e);
        const bool forward = m.edges()[static_cast<std::size_t>(id)].vertices[0] == t[static_cast<std::size_t>(e)];
        for (int j = 1; j <= per_edge; ++j) {
          const int along = forward ? j - 1 : per_edge - j;
          dofs[l++] = edge_base + id * per_edge + along;
        }
      }
      for (int i = 0; i < per_cell; ++i) dofs[l++] = cell_base + c * per_cell + i;

      const AffineMap map = affine_map(m, c);
      for (int i = 0; i < local_; ++i) nodes_[static_cast<std::size_t>(dofs[i])] = map(element_.node(i));
    }

    dirichlet_.assign(static_cast<std::size_t>(num_scalar_), 0);
    if (field_ != Field::none) {
      for (const Facet& f : m.facets()) {
        if (kind_for(f.tag, field_) != BoundaryKind::dirichlet) continue;
        for (int i : facet_local_nodes(f.local_edge))
          dirichlet_[static_cast<std::size_t>(cell_dofs(f.cell)[static_cast<std::size_t>(i)])] = 1;
      }
    }
  }

  const Mesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const Mesh>& mesh_ptr() const { return mesh_; }
  const LagrangeElement& element() const { return element_; }
  int degree() const { return element_.degree(); }
  int components() const { return components_; }
  Field field() const { return field_; }

  int num_scalar_dofs() const { return num_scalar_; }
  int num_dofs() const { return components_ * num_scalar_; }
  int num_local() const { return local_; }

  std::span<const int> cell_dofs(int cell) const {
    return {cell_dofs_.data() + static_cast<std::ptrdiff_t>(local_) * cell, static_cast<std::size_t>(local_)};
  }
  int dof(int scalar, int component) const { return component * num_scalar_ + scalar; }
  const Vec2& node(int scalar) const { return nodes_[static_cast<std::size_t>(scalar)]; }
  bool is_dirichlet(int dof_index) const { return dirichlet_[static_cast<std::size_t>(dof_index % num_scalar_)] != 0; }
  int num_dirichlet_dofs() const {
    int count = 0;
    for (char d : dirichlet_) count += d;
    return components_ * count;
  }

  /// Local node indices lying on local edge e, endpoints included.
  std::vector<int> facet_local_nodes(int e) const {
    const int m = degree();
    std::vector<int> out{e, (e + 1) % 3};
    for (int j = 1; j < m; ++j) out.push_back(3 + e * (m - 1) + (j - 1));
    return out;
  }

private:
  std::shared_ptr<const Mesh> mesh_;
  LagrangeElement element_;
  int components_;
  Field field_;
  int num_scalar_ = 0;
  int local_ = 0;
  std::vector<int> cell_dofs_;
  std::vector<Vec2> nodes_;
  std::vector<char> dirichlet_;
};

inline FeSpace build_space(std::shared_ptr<const Mesh> mesh, int degree, int components, Field field) {
  if (degree < 1) throw std::invalid_argument("finite element degree must be >= 1");
  return FeSpace(std::move(mesh), degree, components, field);
}

/// Generalised Taylor-Hood triple: P_{k+1}^2 velocity, P_k pressure, P_{k+1} potential.
struct TaylorHoodSpaces {
  FeSpace velocity;
  FeSpace pressure;
  FeSpace potential;

  int k() const { return pressure.degree(); }
};

inline TaylorHoodSpaces build_taylor_hood(const std::shared_ptr<const Mesh>& mesh, int k) {
  if (k < 1) throw std::invalid_argument("Taylor-Hood index k must be >= 1");
  return {build_space(mesh, k + 1, 2, Field::flow), build_space(mesh, k, 1, Field::none),
          build_space(mesh, k + 1, 1, Field::potential)};
}

/// All dofs of the three fields minus the Dirichlet-constrained velocity
/// and potential dofs.
inline int count_free_dofs(const FeSpace& velocity, const FeSpace& pressure, const FeSpace& potential) {
  return velocity.num_dofs() - velocity.num_dirichlet_dofs() + pressure.num_dofs() + potential.num_dofs() -
         potential.num_dirichlet_dofs();
}

inline int count_free_dofs(const TaylorHoodSpaces& s) { return count_free_dofs(s.velocity, s.pressure, s.potential); }

/// Coefficient vectors of velocity, pressure and potential.
struct SystemState {
  Vector u;
  Vector p;
  Vector psi;
};

/// Nodal interpolant. `f` returns a double for scalar spaces and a Vec2 for
/// vector spaces.
template <class F>
Vector interpolate(const FeSpace& space, F&& f) {
  Vector c(space.num_dofs());
  using R = std::invoke_result_t<F&, const Vec2&>;
  for (int i = 0; i < space.num_scalar_dofs(); ++i) {
    if constexpr (std::is_arithmetic_v<R>) {
      if (space.components() != 1) throw std::invalid_argument("scalar function interpolated into a vector space");
      c(i) = f(space.node(i));
    } else {
      if (space.components() != 2) throw std::invalid_argument("vector function interpolated into a scalar space");
      const Vec2 v = f(space.node(i));
      c(space.dof(i, 0)) = v.x();
      c(space.dof(i, 1)) = v.y();
    }
  }
  return c;
}

/// Overwrites the Dirichlet-constrained entries of `c` with nodal values of `f`.
template <class F>
void apply_dirichlet(const FeSpace& space, Vector& c, F&& f) {
  using R = std::invoke_result_t<F&, const Vec2&>;
  for (int i = 0; i < space.num_scalar_dofs(); ++i) {
    if (!space.is_dirichlet(i)) continue;
    if constexpr (std::is_arithmetic_v<R>) {
      c(i) = f(space.node(i));
    } else {
      const Vec2 v = f(space.node(i));
      c(space.dof(i, 0)) = v.x();
      c(space.dof(i, 1)) = v.y();
    }
  }
}

struct ScalarValue {
  double value = 0.0;
  Vec2 grad = Vec2::Zero();
};

struct VectorValue {
  Vec2 value = Vec2::Zero();
  Mat2 grad = Mat2::Zero();  // grad(i, j) = d value_i / d x_j
};

namespace detail {
inline void check_eval_args(const FeSpace& space, const Vector& coeffs, int cell) {
  if (cell < 0 || cell >= space.mesh().num_cells()) throw std::out_of_range("cell index out of range");
  if (coeffs.size() != space.num_dofs()) throw std::invalid_argument("coefficient vector does not match the space");
}
}  // namespace detail

inline ScalarValue evaluate_scalar(const FeSpace& space, const Vector& coeffs, int cell, const Vec2& ref) {
  detail::check_eval_args(space, coeffs, cell);
  Vector phi;
  Eigen::Matrix<double, Eigen::Dynamic, 2> dphi;
  space.element().tabulate(ref, phi, dphi);
  const AffineMap map = affine_map(space.mesh(), cell);
  const auto dofs = space.cell_dofs(cell);
  ScalarValue out;
  Vec2 ref_grad = Vec2::Zero();
  for (int i = 0; i < space.num_local(); ++i) {
    const double ci = coeffs(dofs[static_cast<std::size_t>(i)]);
    out.value += ci * phi(i);
    ref_grad += ci * dphi.row(i).transpose();
  }
  out.grad = map.inverse_transpose * ref_grad;
  return out;
}

inline VectorValue evaluate_vector(const FeSpace& space, const Vector& coeffs, int cell, const Vec2& ref) {
  detail::check_eval_args(space, coeffs, cell);
  if (space.components() != 2) throw std::invalid_argument("evaluate_vector on a scalar space");
  Vector phi;
  Eigen::Matrix<double, Eigen::Dynamic, 2> dphi;
  space.element().tabulate(ref, phi, dphi);
  const AffineMap map = affine_map(space.mesh(), cell);
  const auto dofs = space.cell_dofs(cell);
  VectorValue out;
  for (int comp = 0; comp < 2; ++comp) {
    Vec2 ref_grad = Vec2::Zero();
    for (int i = 0; i < space.num_local(); ++i) {
      const double ci = coeffs(space.dof(dofs[static_cast<std::size_t>(i)], comp));
      out.value(comp) += ci * phi(i);
      ref_grad += ci * dphi.row(i).transpose();
    }
    out.grad.row(comp) = (map.inverse_transpose * ref_grad).transpose();
  }
  return out;
}

/// L2 norm and H1 seminorm of a finite element function, returned as
/// {||c||_0, |c|_1}.
inline std::pair<double, double> l2_h1_seminorm(const FeSpace& space, const Vector& coeffs, int quad_degree) {
  const QuadratureRule rule = triangle_rule(quad_degree);
  const Tabulation tab(space.element(), rule);
  double l2 = 0.0, semi = 0.0;
  for (int c = 0; c < space.mesh().num_cells(); ++c) {
    const AffineMap map = affine_map(space.mesh(), c);
    const auto dofs = space.cell_dofs(c);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double w = rule.weights[q] * map.det;
      for (int comp = 0; comp < space.components(); ++comp) {
        double v = 0.0;
        Vec2 g = Vec2::Zero();
        for (int i = 0; i < space.num_local(); ++i) {
          const double ci = coeffs(space.dof(dofs[static_cast<std::size_t>(i)], comp));
          v += ci * tab.values[q](i);
          g += ci * tab.ref_grads[q].row(i).transpose();
        }
        g = map.inverse_transpose * g;
        l2 += w * v * v;
        semi += w * g.squaredNorm();
      }
    }
  }
  return {std::sqrt(l2), std::sqrt(semi)};
}

/// Full H1 norm (||v||_0^2 + |v|_1^2)^{1/2}.
inline double h1_norm(const FeSpace& space, const Vector& coeffs, int quad_degree) {
  const auto [l2, semi] = l2_h1_seminorm(space, coeffs, quad_degree);
  return std::hypot(l2, semi);
}

inline double l2_norm(const FeSpace& space, const Vector& coeffs, int quad_degree) {
  return l2_h1_seminorm(space, coeffs, quad_degree).first;
}

}  // namespace spb
