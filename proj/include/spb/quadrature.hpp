#pragma once

// Quadrature on the reference triangle (0,0),(1,0),(0,1) and the unit edge [0,1].

#include "spb/mesh.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace spb {

inline constexpr int kMaxQuadratureDegree = 10;

struct QuadratureRule {
  std::vector<Vec2> points;  // edge rules use the x coordinate only
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
};

namespace detail {

/// Gauss-Legendre nodes and weights on [0,1], n points (exact to degree 2n-1).
inline void gauss_legendre_unit(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(static_cast<std::size_t>(n), 0.0);
  w.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const double weight = 2.0 / ((1.0 - z * z) * dp * dp);
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    x[lo] = 0.5 * (1.0 - z);
    x[hi] = 0.5 * (1.0 + z);
    w[lo] = 0.5 * weight;
    w[hi] = 0.5 * weight;
  }
}

inline void check_degree(int degree) {
  if (degree < 1 || degree > kMaxQuadratureDegree)
    throw std::invalid_argument("unsupported quadrature degree " + std::to_string(degree) + " (supported: 1.." +
                                std::to_string(kMaxQuadratureDegree) + ")");
}

}  // namespace detail

/// Gauss rule on [0,1] exact for polynomials of the given degree.
inline QuadratureRule edge_rule(int degree) {
  detail::check_degree(degree);
  std::vector<double> x, w;
  detail::gauss_legendre_unit(degree / 2 + 1, x, w);
  QuadratureRule rule;
  for (std::size_t i = 0; i < x.size(); ++i) {
    rule.points.emplace_back(x[i], 0.0);
    rule.weights.push_back(w[i]);
  }
  return rule;
}

/// Collapsed (Duffy) Gauss product rule on the reference triangle, exact
/// for all x^a y^b with a + b <= degree. Points are strictly interior and
/// weights strictly positive.
inline QuadratureRule triangle_rule(int degree) {
  detail::check_degree(degree);
  // x = s (1 - t), y = t, dx dy = (1 - t) ds dt: degree d in s, d + 1 in t.
  std::vector<double> s, ws, t, wt;
  detail::gauss_legendre_unit(degree / 2 + 1, s, ws);
  detail::gauss_legendre_unit((degree + 1) / 2 + 1, t, wt);
  QuadratureRule rule;
  for (std::size_t j = 0; j < t.size(); ++j) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      rule.points.emplace_back(s[i] * (1.0 - t[j]), t[j]);
      rule.weights.push_back(ws[i] * wt[j] * (1.0 - t[j]));
    }
  }
  return rule;
}

}  // namespace spb
