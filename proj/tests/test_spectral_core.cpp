#include <wavesde/grid.hpp>
#include <wavesde/rng.hpp>
#include <wavesde/spectral_operator.hpp>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>

using namespace wavesde;

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

Field random_field(const Grid& g, NormalStream& rng) {
  Field f(g);
  for (auto& v : f.values) v = cplx(rng.normal(), rng.normal());
  return f;
}

}  // namespace

TEST(Grid, TransformIsParsevalUnitaryAndInvertible) {
  const Grid g = make_grid(2, {12, 8}, {two_pi, 3.0});
  NormalStream rng(1, 1);
  const Field f = random_field(g, rng);
  const auto c = f.spectral();
  double s = 0;
  for (auto x : c) s += std::norm(x);
  EXPECT_NEAR(std::sqrt(s), f.norm(), 1e-12 * f.norm());
  const Field back = Field::from_spectral(g, c);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(std::abs(back.values[i] - f.values[i]), 0.0, 1e-12);
}

TEST(Grid, PlaneWaveLandsOnItsMode) {
  const Grid g = make_grid(1, {16}, {two_pi});
  const Field f = sample_field(g, [](const std::vector<double>& x) { return std::polar(1.0, 3.0 * x[0]); });
  const auto c = f.spectral();
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.mode_index(k)[0] == 3) {
      EXPECT_NEAR(std::abs(c[k]), std::sqrt(two_pi), 1e-12);
      EXPECT_DOUBLE_EQ(g.k_component(k, 0), 3.0);
    } else {
      EXPECT_NEAR(std::abs(c[k]), 0.0, 1e-12);
    }
  }
}

TEST(Grid, RejectsBadShapes) {
  EXPECT_THROW(make_grid(1, {0}, {1.0}), std::invalid_argument);
  EXPECT_THROW(make_grid(2, {8}, {1.0}), std::invalid_argument);
  EXPECT_THROW(make_grid(1, {8}, {-1.0}), std::invalid_argument);
}

TEST(Grid, DealiasKeepsLowModesOnly) {
  const Grid g = make_grid(1, {12}, {two_pi});
  const Field f = sample_field(g, [](const std::vector<double>& x) { return std::cos(x[0]) + std::cos(5.0 * x[0]); });
  const Field d = dealias(f);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(d.values[i].real(), std::cos(g.coordinates(i)[0]), 1e-12);
}

TEST(Operator, LaplacianDifferentiatesSine) {
  const Grid g = make_grid(1, {32}, {two_pi});
  const auto A = make_operator("neg_laplacian", g);
  State s(g, {"u"});
  s[0] = sample_field(g, [](const std::vector<double>& x) { return std::sin(4.0 * x[0]); });
  const State As = apply(A, s);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(As[0].values[i].real(), 16.0 * std::sin(4.0 * g.coordinates(i)[0]), 1e-10);
}

TEST(Operator, KindsAndParameters) {
  const Grid g = make_grid(1, {16}, {two_pi});
  EXPECT_THROW(make_operator("no_such_kind", g), std::invalid_argument);
  EXPECT_THROW(make_operator("wave_block", g), std::invalid_argument);
  EXPECT_THROW(make_operator("dirac_1d", make_grid(2, {8, 8}, {1.0, 1.0}), {.k0 = std::nullopt, .m = 1.0}), std::invalid_argument);
  for (const char* kind : {"identity", "laplacian", "neg_laplacian", "abs_grad"}) EXPECT_EQ(make_operator(kind, g).components(), 1);
  EXPECT_EQ(make_operator("wave_block", g, {.k0 = 1.0, .m = std::nullopt}).components(), 2);
  EXPECT_TRUE(make_operator("wave_block", g, {.k0 = 1.0, .m = std::nullopt}).hermitian());
  EXPECT_TRUE(make_operator("dirac_1d", g, {.k0 = std::nullopt, .m = 0.5}).hermitian());
}

TEST(Operator, PropagatorMatchesMatrixExponentialPerMode) {
  const Grid g = make_grid(1, {16}, {two_pi});
  const auto A = make_operator("dirac_1d", g, {.k0 = std::nullopt, .m = 0.7});
  const double t = 0.8;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Eigen::MatrixXcd S = A.symbol_at(k);
    const Eigen::MatrixXcd U = (Eigen::MatrixXcd(cplx(0, -t) * S)).exp();
    for (int c = 0; c < 2; ++c) {
      std::vector<CVec> in(2, CVec(g.size()));
      in[c][k] = 1.0;
      const auto out = propagate_spectral(A, t, in);
      for (int r = 0; r < 2; ++r) EXPECT_NEAR(std::abs(out[r][k] - U(r, c)), 0.0, 1e-13);
    }
  }
}

TEST(Operator, PropagatorIsAGroup) {
  const Grid g = make_grid(1, {32}, {two_pi});
  const auto A = make_operator("wave_block", g, {.k0 = 1.0, .m = std::nullopt});
  NormalStream rng(2, 2);
  State s(g, {"u", "v"});
  s[0] = random_field(g, rng);
  s[1] = random_field(g, rng);
  const State a = propagate(A, 0.3, propagate(A, 0.5, s));
  const State b = propagate(A, 0.8, s);
  const State back = propagate(A, -0.8, b);
  EXPECT_LT(graph_norm(A, a - b, 0), 1e-12 * graph_norm(A, s, 0));
  EXPECT_LT(graph_norm(A, back - s, 0), 1e-12 * graph_norm(A, s, 0));
}

TEST(Operator, GraphNormsMatchRepeatedApplication) {
  const Grid g = make_grid(1, {32}, {two_pi});
  const auto A = make_operator("shifted_sqrt", g, {.k0 = 1.0, .m = std::nullopt});
  NormalStream rng(3, 3);
  State s(g, {"u"});
  s[0] = random_field(g, rng);
  const auto ns = graph_norms(A, s, 2);
  ASSERT_EQ(ns.size(), 3u);
  EXPECT_NEAR(ns[2], graph_norm(A, apply(A, apply(A, s)), 0), 1e-10 * ns[2]);
  EXPECT_NEAR(ns[0], s[0].norm(), 1e-12 * ns[0]);
}

TEST(Operator, WaveMetricMakesEnergyTheNorm) {
  const Grid g = make_grid(1, {32}, {two_pi});
  const double k0 = 1.5;
  const auto A = make_operator("wave_block", g, {.k0 = k0, .m = std::nullopt});
  State s(g, {"u", "v"});
  s[0] = sample_field(g, [](const std::vector<double>& x) { return std::cos(2.0 * x[0]); });
  // ||B u||^2 = (4 + k0^2) ||u||^2
  EXPECT_NEAR(std::pow(graph_norm(A, s, 0), 2), (4.0 + k0 * k0) * std::pow(s[0].norm(), 2), 1e-10);
}

TEST(Rng, CounterBasedDrawsAreAddressable) {
  EXPECT_EQ(counter_normal(1, 2, 3, 4), counter_normal(1, 2, 3, 4));
  EXPECT_NE(counter_normal(1, 2, 3, 4), counter_normal(1, 2, 3, 5));
  NormalStream a(9, 1), b(9, 1);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.normal(), b.normal());
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = counter_normal(5, 0, 0, i);
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
}
