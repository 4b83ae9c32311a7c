#pragma once

// Legacy ASCII VTK output of a solution on a uniformly subdivided mesh.

#include "spb/fe_space.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace spb {

namespace detail {
inline std::string vtk_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}
}  // namespace detail

/// Writes points, triangles and the point arrays "velocity" (3 components,
/// z = 0), "pressure" and "potential". Each cell is split into
/// subdivisions^2 triangles; the points are the shared lattice nodes, so
/// the point count equals the number of P_subdivisions nodes of the mesh.
/// subdivisions = 0 picks the velocity degree.
inline void write_vtk(const TaylorHoodSpaces& spaces, const SystemState& state, std::ostream& os, int subdivisions = 0) {
  const int m = subdivisions > 0 ? subdivisions : spaces.velocity.degree();
  const FeSpace lattice(spaces.velocity.mesh_ptr(), m, 1, Field::none);
  const Mesh& mesh = lattice.mesh();
  const int npts = lattice.num_scalar_dofs();

  // Local lattice index (i, j) -> local node number of the P_m element.
  std::vector<int> local_of(static_cast<std::size_t>((m + 1) * (m + 1)), -1);
  for (int l = 0; l < lattice.num_local(); ++l) {
    const Vec2 r = lattice.element().node(l) * m;
    local_of[static_cast<std::size_t>(std::lround(r.y()) * (m + 1) + std::lround(r.x()))] = l;
  }
  const auto at = [&](int i, int j) { return local_of[static_cast<std::size_t>(j * (m + 1) + i)]; };

  Eigen::MatrixXd values(npts, 4);  // ux uy p psi
  std::vector<char> seen(static_cast<std::size_t>(npts), 0);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto dofs = lattice.cell_dofs(c);
    for (int l = 0; l < lattice.num_local(); ++l) {
      const int g = dofs[static_cast<std::size_t>(l)];
      if (seen[static_cast<std::size_t>(g)]) continue;
      seen[static_cast<std::size_t>(g)] = 1;
      const Vec2 ref = lattice.element().node(l);
      const Vec2 u = evaluate_vector(spaces.velocity, state.u, c, ref).value;
      values.row(g) << u.x(), u.y(), evaluate_scalar(spaces.pressure, state.p, c, ref).value,
          evaluate_scalar(spaces.potential, state.psi, c, ref).value;
    }
  }

  os << "# vtk DataFile Version 3.0\n"
     << "Stokes-Poisson-Boltzmann solution\n"
     << "ASCII\n"
     << "DATASET UNSTRUCTURED_GRID\n"
     << "POINTS " << npts << " double\n";
  for (int i = 0; i < npts; ++i)
    os << detail::vtk_number(lattice.node(i).x()) << ' ' << detail::vtk_number(lattice.node(i).y()) << " 0\n";

  const int ncells = mesh.num_cells() * m * m;
  os << "CELLS " << ncells << ' ' << 4 * ncells << '\n';
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto dofs = lattice.cell_dofs(c);
    const auto g = [&](int i, int j) { return dofs[static_cast<std::size_t>(at(i, j))]; };
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i + j < m; ++i) {
        os << "3 " << g(i, j) << ' ' << g(i + 1, j) << ' ' << g(i, j + 1) << '\n';
        if (i + j + 1 < m) os << "3 " << g(i + 1, j) << ' ' << g(i + 1, j + 1) << ' ' << g(i, j + 1) << '\n';
      }
    }
  }
  os << "CELL_TYPES " << ncells << '\n';
  for (int i = 0; i < ncells; ++i) os << "5\n";

  os << "POINT_DATA " << npts << '\n' << "VECTORS velocity double\n";
  for (int i = 0; i < npts; ++i)
    os << detail::vtk_number(values(i, 0)) << ' ' << detail::vtk_number(values(i, 1)) << " 0\n";
  const char* names[] = {"pressure", "potential"};
  for (int f = 0; f < 2; ++f) {
    os << "SCALARS " << names[f] << " double 1\nLOOKUP_TABLE default\n";
    for (int i = 0; i < npts; ++i) os << detail::vtk_number(values(i, 2 + f)) << '\n';
  }
}

inline void write_vtk(const TaylorHoodSpaces& spaces, const SystemState& state, const std::string& path,
                      int subdivisions = 0) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_vtk(spaces, state, os, subdivisions);
  if (!os) throw std::runtime_error("error while writing " + path);
}

}  // namespace spb
