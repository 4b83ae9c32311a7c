#include "spb/forms.hpp"
#include "spb/mms.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

using namespace spb;

namespace {

std::shared_ptr<const Mesh> reference_triangle() {
  return std::make_shared<const Mesh>(std::vector<Vec2>{Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)},
                                      std::vector<std::array<int, 3>>{{0, 1, 2}},
                                      [](const Vec2&, const Vec2&) { return BoundaryTag{}; });
}

std::shared_ptr<const Mesh> square(int n, SideSet sides = {Side::bottom, Side::right}) {
  return std::make_shared<const Mesh>(build_unit_square_mesh(n, sides));
}

Vector random_vector(int n, std::mt19937& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

SystemState random_state(const CoupledProblem& problem, std::mt19937& rng) {
  const TaylorHoodSpaces& s = problem.spaces();
  SystemState st{random_vector(s.velocity.num_dofs(), rng), random_vector(s.pressure.num_dofs(), rng),
                 random_vector(s.potential.num_dofs(), rng, 0.8)};
  problem.lift(st);
  return st;
}

ProblemConfig unit_config() {
  ProblemConfig c;
  c.E = Vec2(0.0, -1.0);
  return c;
}

}  // namespace

TEST(Forms, ReferenceStiffness) {
  const FeSpace s = build_space(reference_triangle(), 1, 1, Field::none);
  const Eigen::MatrixXd k = Eigen::MatrixXd(assemble_d(s, 1.0));
  Eigen::Matrix3d expected;
  expected << 1, -0.5, -0.5, -0.5, 0.5, 0, -0.5, 0, 0.5;
  EXPECT_LT((k - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((Eigen::MatrixXd(assemble_d(s, 3.0)) - 3.0 * expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forms, ReferenceMass) {
  const FeSpace s = build_space(reference_triangle(), 1, 1, Field::none);
  const Eigen::MatrixXd m = Eigen::MatrixXd(assemble_mass(s));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(m(i, j), i == j ? 1.0 / 12 : 1.0 / 24, 1e-12);
}

TEST(Forms, VectorStiffnessIsBlockDiagonal) {
  const FeSpace v = build_space(reference_triangle(), 1, 2, Field::flow);
  const Eigen::MatrixXd a = Eigen::MatrixXd(assemble_a(v, 2.0));
  EXPECT_LT(a.block(0, 3, 3, 3).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(a(0, 0), 2.0, 1e-12);
  EXPECT_NEAR(a(4, 4), 1.0, 1e-12);
}

TEST(Forms, DivergenceForm) {
  const auto m = square(3);
  const TaylorHoodSpaces th = build_taylor_hood(m, 1);
  const SparseMatrix b = assemble_b(th.velocity, th.pressure);
  const Vector one = Vector::Ones(th.pressure.num_dofs());
  const Vector vx = interpolate(th.velocity, [](const Vec2& x) { return Vec2(x.x(), 0.0); });
  const Vector vxy = interpolate(th.velocity, [](const Vec2& x) { return Vec2(x.x(), x.y()); });
  const Vector rot = interpolate(th.velocity, [](const Vec2& x) { return Vec2(-x.y(), x.x()); });
  EXPECT_NEAR(one.dot(b * vx), -1.0, 1e-12);
  EXPECT_NEAR(one.dot(b * vxy), -2.0, 1e-12);
  EXPECT_LT((b * rot).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Forms, AdvectionWeightedDrag) {
  const auto m = square(2);
  const TaylorHoodSpaces th = build_taylor_hood(m, 1);
  const Vector psi = interpolate(th.potential, [](const Vec2& x) { return x.x(); });
  const SparseMatrix a = assemble_A_psi(th.velocity, th.potential, psi, Vec2(0.0, -1.0));
  const Vector u = interpolate(th.velocity, [](const Vec2&) { return Vec2(1.0, 0.0); });
  const Vector v = interpolate(th.velocity, [](const Vec2&) { return Vec2(1.0, 1.0); });
  EXPECT_NEAR(v.dot(a * u), -1.0, 1e-12);
  // (u . grad x)(E . v) with u = (x, y), v = (0, y): -int x y = -1/4
  const Vector u2 = interpolate(th.velocity, [](const Vec2& x) { return x; });
  const Vector v2 = interpolate(th.velocity, [](const Vec2& x) { return Vec2(0.0, x.y()); });
  EXPECT_NEAR(v2.dot(a * u2), -0.25, 1e-12);
}

TEST(Forms, AdvectionIsLinearInPotential) {
  std::mt19937 rng(5);
  const TaylorHoodSpaces th = build_taylor_hood(square(2), 1);
  const Vector p1 = random_vector(th.potential.num_dofs(), rng), p2 = random_vector(th.potential.num_dofs(), rng);
  const Vec2 E(0.3, -1.0);
  const Eigen::MatrixXd lhs = Eigen::MatrixXd(assemble_A_psi(th.velocity, th.potential, p1 + 2.0 * p2, E));
  const Eigen::MatrixXd rhs = Eigen::MatrixXd(assemble_A_psi(th.velocity, th.potential, p1, E)) +
                              2.0 * Eigen::MatrixXd(assemble_A_psi(th.velocity, th.potential, p2, E));
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  const Vector u1 = random_vector(th.velocity.num_dofs(), rng), u2 = random_vector(th.velocity.num_dofs(), rng);
  const Eigen::MatrixXd c = Eigen::MatrixXd(assemble_c(th.velocity, u1 - u2, th.potential));
  const Eigen::MatrixXd c12 = Eigen::MatrixXd(assemble_c(th.velocity, u1, th.potential)) -
                              Eigen::MatrixXd(assemble_c(th.velocity, u2, th.potential));
  EXPECT_LT((c - c12).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forms, Convection) {
  const TaylorHoodSpaces th = build_taylor_hood(square(2), 1);
  const Vector u = interpolate(th.velocity, [](const Vec2&) { return Vec2(1.0, 0.0); });
  const SparseMatrix c = assemble_c(th.velocity, u, th.potential);
  const Vector s = interpolate(th.potential, [](const Vec2& x) { return x.x(); });
  const Vector t = Vector::Ones(th.potential.num_dofs());
  EXPECT_NEAR(t.dot(c * s), 1.0, 1e-12);
}

TEST(Forms, LoadVectors) {
  const TaylorHoodSpaces th = build_taylor_hood(square(3), 1);
  EXPECT_NEAR(assemble_G(th.potential, [](const Vec2&) { return 1.0; }, 6).sum(), 1.0, 1e-13);
  EXPECT_NEAR(assemble_G(th.potential, [](const Vec2& x) { return x.x(); }, 6).sum(), 0.5, 1e-13);
  EXPECT_EQ(assemble_G(th.potential, {}, 6).norm(), 0.0);

  // F^psi with psi = 0: kappa(0) = 0, so the load is f + g E
  ProblemConfig cfg = unit_config();
  cfg.f = [](const Vec2&) { return Vec2(2.0, 0.0); };
  cfg.g = [](const Vec2&) { return 1.0; };
  const Vector F = assemble_F_psi(th.velocity, th.potential, Vector::Zero(th.potential.num_dofs()), cfg, 6);
  EXPECT_NEAR(F.head(th.velocity.num_scalar_dofs()).sum(), 2.0, 1e-13);
  EXPECT_NEAR(F.tail(th.velocity.num_scalar_dofs()).sum(), -1.0, 1e-13);
}

TEST(Forms, NeumannLoadsIntegrateOverBoundary) {
  const TaylorHoodSpaces th = build_taylor_hood(square(3, {}), 1);
  ProblemConfig cfg = unit_config();
  cfg.traction = [](const Vec2&, const Vec2&) { return Vec2(1.0, 0.5); };
  cfg.flux = [](const Vec2&, const Vec2& n) { return n.x(); };
  const NeumannLoads l = assemble_neumann_loads(th.velocity, th.potential, cfg, 6);
  const int ns = th.velocity.num_scalar_dofs();
  EXPECT_NEAR(l.momentum.head(ns).sum(), 4.0, 1e-13);
  EXPECT_NEAR(l.momentum.tail(ns).sum(), 2.0, 1e-13);
  EXPECT_NEAR(l.potential.sum(), 0.0, 1e-13);  // int n_x over a closed curve

  const TaylorHoodSpaces dir = build_taylor_hood(square(3, {Side::bottom, Side::right}), 1);
  cfg.flux = [](const Vec2&, const Vec2&) { return 1.0; };
  EXPECT_NEAR(assemble_neumann_loads(dir.velocity, dir.potential, cfg, 6).potential.sum(), 2.0, 1e-13);
}

TEST(Forms, StiffnessSymmetricPositiveDefiniteOnFreeDofs) {
  const FeSpace s = build_space(square(3), 2, 1, Field::potential);
  const Eigen::MatrixXd k = Eigen::MatrixXd(assemble_d(s, 1.0));
  EXPECT_LT((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-13);
  std::vector<int> free;
  for (int i = 0; i < s.num_dofs(); ++i)
    if (!s.is_dirichlet(i)) free.push_back(i);
  Eigen::MatrixXd kf(free.size(), free.size());
  for (std::size_t i = 0; i < free.size(); ++i)
    for (std::size_t j = 0; j < free.size(); ++j) kf(i, j) = k(free[i], free[j]);
  EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(kf).info(), Eigen::Success);
  EXPECT_LT(std::abs((k * Vector::Ones(s.num_dofs())).sum()), 1e-12);
  const Eigen::MatrixXd m = Eigen::MatrixXd(assemble_mass(s));
  EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(m).info(), Eigen::Success);
}

TEST(Forms, ChargeLawIsMonotone) {
  ProblemConfig cfg = unit_config();
  cfg.k0 = 0.7;
  cfg.k1 = 1.3;
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    const double s = u(rng), t = u(rng);
    EXPECT_GE((kappa(s, cfg) - kappa(t, cfg)) * (s - t), 0.0);
    EXPECT_GT(kappa_prime(s, cfg), 0.0);
  }
  EXPECT_DOUBLE_EQ(kappa(0.0, cfg), 0.0);
  EXPECT_NEAR(kappa_prime(0.0, cfg), 0.7 * 1.3, 1e-15);
  EXPECT_THROW(kappa(1e4, cfg), DivergenceError);
}

TEST(Forms, ConfigValidation) {
  ProblemConfig cfg = unit_config();
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_DOUBLE_EQ(cfg.E_bar(), 1.0);
  EXPECT_NEAR(cfg.K_bar(), std::cosh(1.0), 1e-15);
  cfg.kappa_lipschitz = 2.5;
  EXPECT_DOUBLE_EQ(cfg.K_bar(), 2.5);
  for (auto bad : {&ProblemConfig::mu, &ProblemConfig::epsilon}) {
    ProblemConfig c = unit_config();
    c.*bad = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
  }
  ProblemConfig c = unit_config();
  c.alpha = 2.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Forms, FusedResidualMatchesBlockAssembly) {
  std::mt19937 rng(99);
  for (int k : {1, 2}) {
    const TaylorHoodSpaces th = build_taylor_hood(square(2), k);
    const ProblemConfig cfg = manufactured_config(manufactured_solution(), unit_config());
    const CoupledProblem problem(th, cfg);
    const SystemState s = random_state(problem, rng);
    const int qd = problem.quadrature_degree();
    const NeumannLoads nl = assemble_neumann_loads(th.velocity, th.potential, cfg, qd);
    const SparseMatrix b = assemble_b(th.velocity, th.pressure);
    const Vector ru = assemble_a(th.velocity, cfg.mu) * s.u + SparseMatrix(b.transpose()) * s.p +
                      assemble_A_psi(th.velocity, th.potential, s.psi, cfg.E) * s.u -
                      assemble_F_psi(th.velocity, th.potential, s.psi, cfg, qd) - nl.momentum;
    const Vector rp = b * s.u;
    const Vector rs = assemble_d(th.potential, cfg.epsilon) * s.psi + assemble_kappa_residual(th.potential, s.psi, cfg, qd) +
                      assemble_c(th.velocity, s.u, th.potential) * s.psi - assemble_G(th.potential, cfg.g, qd) -
                      nl.potential;
    const Vector fused = problem.residual(s);
    const DofLayout& L = problem.layout();
    double worst = 0.0;
    for (int i = 0; i < th.velocity.num_dofs(); ++i)
      if (L.u(i) >= 0) worst = std::max(worst, std::abs(fused(L.u(i)) - ru(i)));
    for (int i = 0; i < th.pressure.num_dofs(); ++i) worst = std::max(worst, std::abs(fused(L.p(i)) - rp(i)));
    for (int i = 0; i < th.potential.num_dofs(); ++i)
      if (L.psi(i) >= 0) worst = std::max(worst, std::abs(fused(L.psi(i)) - rs(i)));
    EXPECT_LT(worst, 1e-11) << "k = " << k;
  }
}

TEST(Forms, JacobianMatchesFiniteDifferences) {
  std::mt19937 rng(17);
  for (int k : {1, 2}) {
    const TaylorHoodSpaces th = build_taylor_hood(square(2), k);
    ProblemConfig base = unit_config();
    base.E = Vec2(0.4, -1.0);
    base.k1 = 1.5;
    const CoupledProblem problem(th, manufactured_config(manufactured_solution(), base));
    const SystemState s = random_state(problem, rng);
    const SparseSystem sys = problem.linearize(s);
    const double h = 1e-6;
    for (int trial = 0; trial < 3; ++trial) {
      const Vector dir = random_vector(problem.layout().size(), rng);
      SystemState plus = s, minus = s;
      problem.layout().add_increment(plus, dir, h);
      problem.layout().add_increment(minus, dir, -h);
      const Vector fd = (problem.residual(plus) - problem.residual(minus)) / (2 * h);
      const Vector jd = sys.matrix * dir;
      EXPECT_LT((fd - jd).norm() / jd.norm(), 1e-5) << "k = " << k;
    }
  }
}

TEST(Forms, DofLayout) {
  const TaylorHoodSpaces th = build_taylor_hood(square(2), 1);
  const DofLayout L(th);
  EXPECT_EQ(L.size(), 57);
  EXPECT_EQ(L.velocity.offset, 0);
  EXPECT_EQ(L.pressure.offset, L.velocity.size);
  EXPECT_EQ(L.potential.offset + L.potential.size, 57);
  EXPECT_EQ(L.pressure.size, 9);
}
