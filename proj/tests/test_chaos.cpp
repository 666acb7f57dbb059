#include <wavesde/chaos.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace wavesde;

namespace {

CVec vec(std::initializer_list<cplx> v) { return CVec(v); }

}  // namespace

TEST(ChaosSpace, DimensionAndIndexing) {
  const ChaosSpace s(3, 4);
  EXPECT_EQ(s.size(), chaos_dimension(3, 4));
  EXPECT_EQ(s.size(), 35u);  // C(7, 3)
  EXPECT_EQ(s.degree(0), 0);
  for (std::size_t a = 0; a < s.size(); ++a) EXPECT_EQ(s.index_of(s.alpha(a)), long(a));
  EXPECT_THROW(ChaosSpace(0, 2), std::invalid_argument);
  EXPECT_THROW(ChaosSpace(2, 2, {1.0, 2.0}), std::invalid_argument);
}

TEST(Wick, FirstChaosSquareIsSecondHermite) {
  // xi : xi = xi^2 - 1 = sqrt(2) h_2 in the normalized basis
  const ChaosSpace s(1, 4);
  const auto xi = first_chaos(s, vec({1.0}));
  const auto sq = wick_product(xi, xi);
  EXPECT_NEAR(std::abs(sq.c[s.index_of({2})] - std::sqrt(2.0)), 0.0, 1e-14);
  EXPECT_NEAR(sq.c.norm(), std::sqrt(2.0), 1e-14);
}

TEST(Wick, STransformTurnsWickIntoPointwise) {
  const ChaosSpace s(2, 6);
  ChaosVector a(s), b(s);
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.degree(i) <= 3) {
      a.c[i] = cplx(0.3 * i, 1.0 / (1 + i));
      b.c[i] = cplx(1.0 - 0.1 * i, 0.2);
    }
  const CVec z = vec({cplx(0.4, 0.1), cplx(-0.7, 0.3)});
  EXPECT_NEAR(std::abs(s_transform(wick_product(a, b), z) - s_transform(a, z) * s_transform(b, z)), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(s_transform(wick_power(a, 2), z) - std::pow(s_transform(a, z), 2)), 0.0, 1e-12);
}

TEST(Wick, TruncationIsFlagged) {
  const ChaosSpace s(1, 2);
  const auto xi = first_chaos(s, vec({1.0}));
  EXPECT_FALSE(wick_product(xi, xi).truncated);
  EXPECT_TRUE(wick_power(xi, 3).truncated);
}

TEST(Fock, ExponentialVectorIsAnEigenvectorOfAnnihilation) {
  const ChaosSpace s(2, 10);
  const CVec eta = vec({0.3, cplx(0.0, -0.2)}), y = vec({1.0, 2.0});
  const auto e = exp_vector(s, eta);
  const auto ae = annihilate(e, y);
  const cplx lambda = y[0] * eta[0] + y[1] * eta[1];
  for (std::size_t a = 0; a < s.size(); ++a)
    if (s.degree(a) < s.max_degree()) EXPECT_NEAR(std::abs(ae.c[a] - lambda * e.c[a]), 0.0, 1e-14);
}

TEST(Fock, CreationIsWickMultiplicationByFirstChaos) {
  const ChaosSpace s(2, 5);
  const CVec z = vec({0.5, -1.5});
  ChaosVector v(s);
  for (std::size_t a = 0; a < s.size(); ++a)
    if (s.degree(a) < 4) v.c[a] = cplx(1.0 / (1 + a), 0.1 * a);
  const auto lhs = create(v, z);
  const auto rhs = wick_product(first_chaos(s, z), v);
  EXPECT_NEAR((lhs.c - rhs.c).norm(), 0.0, 1e-13);
}

TEST(Fock, SecondQuantizationMapsExponentialVectors) {
  const ChaosSpace s(2, 8);
  Eigen::MatrixXcd T(2, 2);
  T << 0.5, cplx(0, 0.2), -0.3, 0.9;
  const CVec zeta = vec({0.2, -0.1});
  const CVec Tz = vec({T(0, 0) * zeta[0] + T(0, 1) * zeta[1], T(1, 0) * zeta[0] + T(1, 1) * zeta[1]});
  const auto lhs = second_quantization(s, T, exp_vector(s, zeta));
  EXPECT_NEAR((lhs.c - exp_vector(s, Tz).c).norm(), 0.0, 1e-13);
  EXPECT_NEAR((second_quantization(s, Eigen::MatrixXcd::Identity(2, 2)).matrix - identity_operator(s).matrix).norm(), 0.0, 1e-14);
}

TEST(Fock, OperatorSymbolOfIdentityIsExponential) {
  const ChaosSpace s(2, 12);
  const CVec z = vec({0.3, 0.2}), e = vec({-0.4, 0.5});
  EXPECT_NEAR(std::abs(operator_symbol(identity_operator(s), z, e) - std::exp(z[0] * e[0] + z[1] * e[1])), 0.0, 1e-12);
}

TEST(Norms, WeightedNormsAndTestNorm) {
  const ChaosSpace s(2, 3);
  EXPECT_NEAR(test_norm(s, vec({1.0, 0.0}), 1), 2.0, 1e-15);
  EXPECT_NEAR(test_norm(s, vec({0.0, 1.0}), 1), 3.0, 1e-15);
  const auto xi = first_chaos(s, vec({1.0, 0.0}));
  EXPECT_NEAR(norm_beta(xi, 1, 0.0), 2.0, 1e-15);
  EXPECT_NEAR(norm_beta(xi, -1, 0.0), 0.5, 1e-15);
  EXPECT_THROW(norm_beta(xi, 1, 2.0), std::invalid_argument);
}

TEST(Norms, GrowthFitCoversExponentialVector) {
  const ChaosSpace s(2, 8);
  const auto e = exp_vector(s, vec({0.3, 0.1}));
  const auto fit = growth_bound_fit([&](const CVec& z) { return s_transform(e, z); }, s, 1, {0.5, 1.0, 1.5});
  EXPECT_TRUE(fit.conforming);
  EXPECT_GT(fit.C, 0.0);
  EXPECT_GE(fit.K, 0.0);
}

TEST(WickEvolution, DegreeZeroIsTheDeterministicSolution) {
  const Grid g = make_grid(1, {16}, {2 * std::numbers::pi});
  const Model m = build_model(ModelKind::nls, g, {});
  State phi0 = m.zero_state();
  phi0[0] = sample_field(g, [](const std::vector<double>& x) { return cplx(0.5 * std::cos(x[0]), 0.1); });
  const ChaosSpace space(2, 3);
  const WickNoise noise{default_covariance(g, 2, 0.5, 2.0), 1};
  const auto w = solve_wick_evolution(m, phi0, noise, 0.2, 0.01, space);
  const auto d = solve_deterministic(m, phi0, 0.2, 0.01, Scheme::exp_euler, 0);
  // Wick products never lower the degree and creation raises it, so the
  // degree-0 block follows the deterministic flow even for the cubic model
  Model lin = m;
  lin.linear = true;
  const auto wl = solve_wick_evolution(lin, phi0, noise, 0.2, 0.01, space);
  const auto dl = solve_deterministic(lin, phi0, 0.2, 0.01, Scheme::exp_euler, 0);
  EXPECT_LT(graph_norm(m.generator, wl.final_state().mean() - dl.final_state(), 0), 1e-13);
  EXPECT_LT(graph_norm(m.generator, w.final_state().mean() - d.final_state(), 0), 1e-12);
  EXPECT_FALSE(wl.truncation_overflow);
  EXPECT_THROW(solve_wick_evolution(m, phi0, noise, 0.2, 0.01, ChaosSpace(3, 2)), std::invalid_argument);
}
