#include <wavesde/mild_solver.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace wavesde;

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;
Grid line(int n) { return make_grid(1, {n}, {two_pi}); }

State bump(const Model& m, double amp) {
  State s = m.zero_state();
  s[0] = sample_field(m.grid, [&](const std::vector<double>& x) {
    const double y = x[0] - std::numbers::pi;
    return amp * std::exp(-y * y) * std::polar(1.0, y);
  });
  return s;
}

Field constant_field(const Grid& g, cplx c) {
  Field f(g);
  for (auto& v : f.values) v = c;
  return f;
}

ThetaPotential constant_theta(const Grid& g) {
  ThetaPotential th;
  th.modes.push_back(constant_field(g, 1.0));
  return th;
}

}  // namespace

TEST(Picard, LinearConstantPotentialHasClosedForm) {
  // phi(T) = e^{theta T} U(T) phi0 when Theta is a constant and J = 0
  Model m = build_model(ModelKind::nls, line(32), {});
  m.linear = true;
  const State phi0 = bump(m, 1.0);
  const cplx th(0.3, 0.2);
  PicardOptions opt;
  opt.n_time_nodes = 513;
  opt.tol = 1e-13;
  const auto r = picard_solve(m, phi0, 1.0, constant_theta(m.grid), {th}, {}, 0.0, opt);
  ASSERT_TRUE(r.converged);
  const State exact = std::exp(th) * propagate(m.generator, 1.0, phi0);
  // trapezoidal error O(h^2)
  EXPECT_LT(graph_norm(m.generator, r.trajectory.final_state() - exact, 0), 1e-5);
  EXPECT_LE(r.fixed_point_residual, 2 * opt.tol);
}

TEST(Picard, ZAffineInThetaAndValidates) {
  const Model m = build_model(ModelKind::nls, line(16), {});
  const auto th = constant_theta(m.grid);
  const Field f = th.field({0.1}, {2.0}, cplx(0, 1));
  EXPECT_NEAR(std::abs(f.values[3] - cplx(0.1, 2.0)), 0.0, 1e-15);
  EXPECT_THROW(th.field({1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(picard_solve(m, bump(m, 1.0), -1.0, th, {0.0}, {}, 0.0), std::invalid_argument);
}

TEST(Picard, ContractionRatioIsTheGeometricMean) {
  EXPECT_NEAR(contraction_ratio({1.0, 0.5, 0.125, 0.0625}), std::cbrt(0.5 * 0.25 * 0.5), 1e-15);
  EXPECT_THROW(contraction_ratio({1.0, 0.5}), std::invalid_argument);
}

TEST(Picard, HolomorphicInZForLinearPotential) {
  Model m = build_model(ModelKind::nls, line(16), {});
  m.linear = true;
  const State phi0 = bump(m, 1.0);
  PicardOptions opt;
  opt.n_time_nodes = 17;
  opt.tol = 1e-13;
  HolomorphyStencil st;
  const double r = holomorphy_check(m, phi0, 0.5, constant_theta(m.grid), {0.1}, {3.0}, st, phi0, opt);
  EXPECT_LT(r, 1e-8);
}

TEST(Stepping, ExponentialEulerIsFirstOrder) {
  const Model m = build_model(ModelKind::nls, line(32), {});
  const State phi0 = bump(m, 1.0);
  const State ref = solve_deterministic(m, phi0, 0.5, 1.0 / 4096, Scheme::exp_euler, 0).final_state();
  const double e1 = graph_norm(m.generator, solve_deterministic(m, phi0, 0.5, 1.0 / 64, Scheme::exp_euler, 0).final_state() - ref, 0);
  const double e2 = graph_norm(m.generator, solve_deterministic(m, phi0, 0.5, 1.0 / 128, Scheme::exp_euler, 0).final_state() - ref, 0);
  EXPECT_NEAR(std::log2(e1 / e2), 1.0, 0.15);
}

TEST(Stepping, StepCountMustDivide) {
  const Model m = build_model(ModelKind::nls, line(16), {});
  EXPECT_THROW(solve_deterministic(m, bump(m, 1.0), 1.0, 0.3, Scheme::strang), std::invalid_argument);
}

TEST(Ito, StopsWhenThresholdIsExceeded) {
  Model m = build_model(ModelKind::nls, line(16), {});
  m.linear = true;
  const State phi0 = bump(m, 1.0);
  const double n0 = graph_norm(m.generator, phi0, 0);
  // constant potential with growth rate 1: ||phi(t)|| = e^t n0
  const Field grow = constant_field(m.grid, 1.0);
  ItoOptions o;
  o.theta = &grow;
  const auto tr = solve_ito(m, phi0, 1.0, 1e-3, IncrementSource{}, 1.5 * n0, 1, o);
  ASSERT_TRUE(tr.stop_time.has_value());
  EXPECT_NEAR(*tr.stop_time, std::log(1.5), 2e-3);
  EXPECT_FALSE(tr.ran_to_end());
  EXPECT_THROW(solve_ito(m, phi0, 1.0, 1e-3, IncrementSource{}, 0.5 * n0, 1), std::invalid_argument);
}

TEST(Ito, BlowUpIsFlagged) {
  Model m = build_model(ModelKind::nls, line(16), {});
  m.linear = true;
  const Field grow = constant_field(m.grid, 200.0);
  ItoOptions o;
  o.theta = &grow;
  const auto tr = solve_ito(m, bump(m, 1.0), 1.0, 1e-2, IncrementSource{}, std::numeric_limits<double>::infinity(), 1, o);
  EXPECT_TRUE(tr.blew_up);
}

TEST(Ito, SamplerFixesTheRun) {
  const Model m = build_model(ModelKind::nls, line(16), {});
  const QWienerSampler s(default_covariance(m.grid, 3, 0.5, 2.0), 4, 2);
  const auto a = solve_ito(m, bump(m, 1.0), 0.2, 1e-2, s, 1e6, 1);
  const auto b = solve_ito(m, bump(m, 1.0), 0.2, 1e-2, s, 1e6, 1);
  EXPECT_EQ(a.final_state()[0].values, b.final_state()[0].values);
  EXPECT_EQ(a.seed, 4u);
  EXPECT_EQ(a.stream, 2u);
  const auto c = solve_ito(m, bump(m, 1.0), 0.2, 1e-2, s.fork(3), 1e6, 1);
  EXPECT_NE(a.final_state()[0].values, c.final_state()[0].values);
}
