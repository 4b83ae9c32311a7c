#include "spb/mms.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace spb;

namespace {

constexpr double pi = std::numbers::pi;

std::vector<Vec2> random_points(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec2> pts;
  for (int i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng));
  return pts;
}

}  // namespace

TEST(Manufactured, VelocityIsDivergenceFree) {
  const ExactSolution e = manufactured_solution();
  for (const Vec2& x : random_points(100, 1)) EXPECT_NEAR(e.grad_u(x).trace(), 0.0, 1e-12);
}

TEST(Manufactured, DerivativesMatchFiniteDifferences) {
  const ExactSolution e = manufactured_solution();
  const double h = 1e-5;
  for (const Vec2& x : random_points(20, 2)) {
    const Vec2 dx(h, 0.0), dy(0.0, h);
    Mat2 gu;
    gu.col(0) = (e.u(x + dx) - e.u(x - dx)) / (2 * h);
    gu.col(1) = (e.u(x + dy) - e.u(x - dy)) / (2 * h);
    EXPECT_LT((gu - e.grad_u(x)).cwiseAbs().maxCoeff(), 1e-8);
    const Vec2 lu = (e.u(x + dx) + e.u(x - dx) + e.u(x + dy) + e.u(x - dy) - 4 * e.u(x)) / (h * h);
    EXPECT_LT((lu - e.laplace_u(x)).cwiseAbs().maxCoeff(), 1e-3);
    const Vec2 gp((e.p(x + dx) - e.p(x - dx)) / (2 * h), (e.p(x + dy) - e.p(x - dy)) / (2 * h));
    EXPECT_LT((gp - e.grad_p(x)).norm(), 1e-8);
    const Vec2 gs((e.psi(x + dx) - e.psi(x - dx)) / (2 * h), (e.psi(x + dy) - e.psi(x - dy)) / (2 * h));
    EXPECT_LT((gs - e.grad_psi(x)).norm(), 1e-8);
    const double ls = (e.psi(x + dx) + e.psi(x - dx) + e.psi(x + dy) + e.psi(x - dy) - 4 * e.psi(x)) / (h * h);
    EXPECT_NEAR(ls, e.laplace_psi(x), 1e-3);
  }
}

TEST(Manufactured, ForcingValues) {
  const Forcing f = derive_forcing(manufactured_solution(), ProblemConfig{});
  const Vec2 c(0.5, 0.5);
  EXPECT_NEAR(f.f(c).x(), 0.0, 1e-12);
  EXPECT_NEAR(f.f(c).y(), -2 * pi * pi, 1e-12);
  EXPECT_NEAR(f.f(c).y(), -19.7392, 1e-4);
  EXPECT_NEAR(f.g(c), std::sinh(-1.0) - 2 * pi * pi, 1e-12);
  EXPECT_NEAR(f.g(c), -20.9144, 1e-4);
  // independent evaluation at a generic point
  const Vec2 x(0.3, 0.8);
  const double psi = std::cos(pi * 1.1), s = std::sin(pi * 1.1);
  const Vec2 u(std::cos(0.3 * pi) * std::sin(0.8 * pi), -std::sin(0.3 * pi) * std::cos(0.8 * pi));
  const double g = std::sinh(psi) + u.dot(Vec2(-pi * s, -pi * s)) + 2 * pi * pi * psi;
  EXPECT_NEAR(f.g(x), g, 1e-12);
}

TEST(Manufactured, ForcingScalesWithCoefficients) {
  ProblemConfig cfg;
  cfg.mu = 2.0;
  cfg.epsilon = 0.5;
  cfg.E = Vec2(1.0, 0.0);
  const ExactSolution e = manufactured_solution();
  const Forcing f = derive_forcing(e, cfg);
  const Vec2 x(0.2, 0.7);
  const Vec2 expected = -2.0 * e.laplace_u(x) + e.grad_p(x) + 0.5 * e.laplace_psi(x) * Vec2(1.0, 0.0);
  EXPECT_LT((f.f(x) - expected).norm(), 1e-12);
}

TEST(Manufactured, NeumannData) {
  const ExactSolution e = manufactured_solution();
  const Vec2 x(0.0, 0.3), n(-1.0, 0.0);
  const NeumannData d = neumann_data(e, ProblemConfig{}, x, n);
  EXPECT_LT((d.traction - (e.grad_u(x) * n - e.p(x) * n)).norm(), 1e-14);
  EXPECT_NEAR(d.flux, -e.grad_psi(x).x(), 1e-14);
  EXPECT_THROW(neumann_data(e, ProblemConfig{}, x, Vec2(2.0, 0.0)), std::invalid_argument);
}

TEST(ErrorNorms, ZeroStateGivesExactNorms) {
  const auto m = std::make_shared<const Mesh>(build_unit_square_mesh(8, manufactured_dirichlet_sides()));
  const TaylorHoodSpaces th = build_taylor_hood(m, 2);
  const SystemState zero{Vector::Zero(th.velocity.num_dofs()), Vector::Zero(th.pressure.num_dofs()),
                         Vector::Zero(th.potential.num_dofs())};
  const ErrorNorms e = error_norms(th, zero, manufactured_solution(), 10);
  const double h1 = std::sqrt(0.5 + pi * pi);
  EXPECT_NEAR(e.u, h1, 1e-8);
  EXPECT_NEAR(e.p, 0.5, 1e-8);
  EXPECT_NEAR(e.psi, h1, 1e-8);
  const ErrorNorms z = error_norms(th, zero, zero_solution(), 10);
  EXPECT_EQ(z.u + z.p + z.psi, 0.0);
}

TEST(ErrorNorms, InterpolantConvergesAtOptimalRate) {
  double prev = 0.0;
  for (int n : {4, 8}) {
    const auto m = std::make_shared<const Mesh>(build_unit_square_mesh(n, manufactured_dirichlet_sides()));
    const TaylorHoodSpaces th = build_taylor_hood(m, 1);
    const ExactSolution ex = manufactured_solution();
    const SystemState s{interpolate(th.velocity, ex.u), interpolate(th.pressure, ex.p), interpolate(th.potential, ex.psi)};
    const double e = error_norms(th, s, ex, 8).psi;
    if (prev > 0.0) {
      EXPECT_NEAR(std::log2(prev / e), 2.0, 0.15);
    }
    prev = e;
  }
}

TEST(Rates, Formula) {
  EXPECT_NEAR(convergence_rate(6.50e-1, 1.79e-1, 0.7071, 0.3536), 1.860, 1e-3);
  EXPECT_NEAR(convergence_rate(1.0, 0.25, 1.0, 0.5), 2.0, 1e-15);
  EXPECT_EQ(convergence_rate(0.3, 0.3, 1.0, 0.5), 0.0);
  EXPECT_THROW(convergence_rate(0.0, 1.0, 1.0, 0.5), std::invalid_argument);
  EXPECT_THROW(convergence_rate(1.0, 1.0, 0.5, 0.5), std::invalid_argument);
}

TEST(Study, TableStructureAndOutput) {
  const ConvergenceTable t = run_convergence_study(1, 2, ProblemConfig{});
  ASSERT_TRUE(t.complete);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0].dofs, 57);
  EXPECT_EQ(t.rows[1].dofs, 217);
  EXPECT_FALSE(t.rows[0].rate_u.has_value());
  ASSERT_TRUE(t.rows[1].rate_u.has_value());
  EXPECT_NEAR(*t.rows[1].rate_u, 1.86, 0.01);
  std::ostringstream csv;
  write_csv(t, csv);
  const std::string s = csv.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "DoF,h,e(u),r(u),e(p),r(p),e(psi),r(psi),it");
  EXPECT_NE(s.find("57,0.7071,6.50e-01,★"), std::string::npos);
  EXPECT_THROW(run_convergence_study(1, 1, ProblemConfig{}), std::invalid_argument);
}

TEST(Study, FailingLevelKeepsPartialTable) {
  StudyOptions opts;
  opts.solver.maxit = 1;
  const ConvergenceTable t = run_convergence_study(1, 2, ProblemConfig{}, opts);
  EXPECT_FALSE(t.complete);
  EXPECT_TRUE(t.rows.empty());
  EXPECT_NE(t.failure.find("n=2"), std::string::npos);
}
