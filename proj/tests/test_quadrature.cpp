#include "spb/quadrature.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace spb;

namespace {

// integral of x^a y^b over the reference triangle: a! b! / (a + b + 2)!
double monomial_oracle(int a, int b) {
  return std::tgamma(a + 1.0) * std::tgamma(b + 1.0) / std::tgamma(a + b + 3.0);
}

}  // namespace

TEST(Quadrature, TriangleExactForAllMonomials) {
  for (int d = 1; d <= kMaxQuadratureDegree; ++d) {
    const QuadratureRule r = triangle_rule(d);
    for (int a = 0; a <= d; ++a)
      for (int b = 0; a + b <= d; ++b) {
        double sum = 0.0;
        for (std::size_t q = 0; q < r.size(); ++q)
          sum += r.weights[q] * std::pow(r.points[q].x(), a) * std::pow(r.points[q].y(), b);
        EXPECT_NEAR(sum, monomial_oracle(a, b), 1e-13) << "degree " << d << " x^" << a << " y^" << b;
      }
  }
}

TEST(Quadrature, EdgeExact) {
  for (int d = 1; d <= kMaxQuadratureDegree; ++d) {
    const QuadratureRule r = edge_rule(d);
    for (int a = 0; a <= d; ++a) {
      double sum = 0.0;
      for (std::size_t q = 0; q < r.size(); ++q) sum += r.weights[q] * std::pow(r.points[q].x(), a);
      EXPECT_NEAR(sum, 1.0 / (a + 1), 1e-13);
    }
  }
}

TEST(Quadrature, PointsInsideAndWeightsPositive) {
  for (int d = 1; d <= kMaxQuadratureDegree; ++d) {
    const QuadratureRule r = triangle_rule(d);
    for (std::size_t q = 0; q < r.size(); ++q) {
      EXPECT_GT(r.weights[q], 0.0);
      EXPECT_GT(r.points[q].x(), 0.0);
      EXPECT_GT(r.points[q].y(), 0.0);
      EXPECT_LT(r.points[q].x() + r.points[q].y(), 1.0);
    }
  }
}

TEST(Quadrature, DegreeTwoIsNotExactForCubics) {
  const QuadratureRule r = triangle_rule(2);
  double sum = 0.0;
  for (std::size_t q = 0; q < r.size(); ++q) sum += r.weights[q] * std::pow(r.points[q].x(), 4);
  EXPECT_GT(std::abs(sum - monomial_oracle(4, 0)), 1e-6);
}

TEST(Quadrature, RejectsUnsupportedDegree) {
  EXPECT_THROW(triangle_rule(0), std::invalid_argument);
  EXPECT_THROW(triangle_rule(kMaxQuadratureDegree + 1), std::invalid_argument);
  EXPECT_THROW(edge_rule(-1), std::invalid_argument);
}
