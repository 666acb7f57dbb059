#include <wavesde/mild_solver.hpp>
#include <wavesde/models.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace wavesde;

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;
Grid line(int n) { return make_grid(1, {n}, {two_pi}); }

State bump(const Model& m, double amp, bool real = false) {
  State s = m.zero_state();
  s[0] = sample_field(m.grid, [&](const std::vector<double>& x) {
    const double y = x[0] - std::numbers::pi;
    return real ? cplx(amp * std::exp(-y * y)) : amp * std::exp(-y * y) * std::polar(1.0, y);
  });
  return s;
}

}  // namespace

TEST(Models, NamesRoundTrip) {
  for (auto k : {ModelKind::nls, ModelKind::klein_gordon, ModelKind::zakharov, ModelKind::maxwell_dirac, ModelKind::sine_gordon})
    EXPECT_EQ(parse_model_kind(to_string(k)), k);
  EXPECT_THROW(parse_model_kind("heat"), std::invalid_argument);
}

TEST(Models, ShapesAndParameterChecks) {
  EXPECT_EQ(build_model(ModelKind::nls, line(16), {}).components(), 1u);
  EXPECT_EQ(build_model(ModelKind::klein_gordon, line(16), {}).components(), 2u);
  EXPECT_EQ(build_model(ModelKind::zakharov, line(16), {}).components(), 2u);
  EXPECT_EQ(build_model(ModelKind::maxwell_dirac, line(16), {}).components(), 6u);
  EXPECT_THROW(build_model(ModelKind::maxwell_dirac, make_grid(2, {8, 8}, {1, 1}), {}), std::invalid_argument);
  EXPECT_THROW(build_model(ModelKind::nls, line(16), {.p = 2}), std::invalid_argument);
  EXPECT_THROW(build_model(ModelKind::klein_gordon, line(16), {.k0 = 0.0}), std::invalid_argument);
}

TEST(Models, InteractionMatchesPointwiseFormulas) {
  const Grid g = line(32);
  const Model nls = build_model(ModelKind::nls, g, {.p = 5, .sign = -1});
  const State s = bump(nls, 0.7);
  const State J = apply_J(nls, s);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const cplx z = s[0].values[i];
    EXPECT_NEAR(std::abs(J[0].values[i] - (-std::pow(std::abs(z), 4) * z)), 0.0, 1e-14);
  }
  const Model sg = build_model(ModelKind::sine_gordon, g, {.g = 2.0});
  const State u = bump(sg, 1.1, true);
  const State Js = apply_J(sg, u);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(Js[0].values[i], cplx{});
    EXPECT_NEAR(Js[1].values[i].real(), 2.0 * std::sin(u[0].values[i].real()), 1e-14);
  }
}

TEST(Models, LinearSwitchAndShapeCheck) {
  Model m = build_model(ModelKind::nls, line(16), {});
  m.linear = true;
  const State J = apply_J(m, bump(m, 1.0));
  EXPECT_EQ(J[0].norm(), 0.0);
  const Model kg = build_model(ModelKind::klein_gordon, line(16), {});
  EXPECT_THROW(apply_J(kg, m.zero_state()), std::invalid_argument);
}

TEST(Models, NonlinearFlowIsExactForNls) {
  // the interaction flow of NLS is a pointwise phase rotation
  const Model m = build_model(ModelKind::nls, line(32), {});
  const State s = bump(m, 0.9);
  const double tau = 0.37;
  const State f = nonlinear_flow(m, s, tau);
  for (std::size_t i = 0; i < m.grid.size(); ++i) {
    const cplx z = s[0].values[i];
    const cplx expect = z * std::polar(1.0, tau * std::norm(z));
    EXPECT_NEAR(std::abs(f[0].values[i] - expect), 0.0, 1e-14);
  }
}

TEST(Models, NonlinearFlowAgreesWithFineIntegration) {
  for (auto kind : {ModelKind::sine_gordon, ModelKind::klein_gordon, ModelKind::zakharov, ModelKind::maxwell_dirac}) {
    const Model m = build_model(kind, line(32), {});
    State s = m.zero_state();
    for (std::size_t c = 0; c < s.count(); ++c)
      s[c] = sample_field(m.grid, [&](const std::vector<double>& x) { return cplx(0.5 * std::cos(x[0] + c), 0.0); });
    const double tau = 0.2;
    // RK4 on d/dt phi = F(phi) without dealiasing
    State r = s;
    const int n = 2000;
    const double h = tau / n;
    for (int k = 0; k < n; ++k) {
      const State k1 = nonlinear_rhs(m, r, false);
      const State k2 = nonlinear_rhs(m, r + cplx(h / 2) * k1, false);
      const State k3 = nonlinear_rhs(m, r + cplx(h / 2) * k2, false);
      const State k4 = nonlinear_rhs(m, r + cplx(h) * k3, false);
      r = r + cplx(h / 6) * (k1 + cplx(2) * k2 + cplx(2) * k3 + k4);
    }
    const State f = nonlinear_flow(m, s, tau);
    double err = 0;
    for (std::size_t c = 0; c < s.count(); ++c) err += (f - r)[c].norm();
    EXPECT_LT(err, 1e-10) << to_string(kind);
  }
}

TEST(Models, NlsConservesMassAndEnergyUnderStrang) {
  const Model m = build_model(ModelKind::nls, line(64), {});
  const State s0 = bump(m, 0.8);
  const auto tr = solve_deterministic(m, s0, 0.5, 1e-3, Scheme::strang, 0);
  const auto c0 = conserved(m, s0), c1 = conserved(m, tr.final_state());
  EXPECT_NEAR(c1.at("mass"), c0.at("mass"), 1e-12);
  EXPECT_NEAR(c1.at("energy"), c0.at("energy"), 1e-6);
}

TEST(Models, MaxwellDiracInitialDataIsGaugeCompatible) {
  const Model m = build_model(ModelKind::maxwell_dirac, line(32), {});
  const Field psi = bump(build_model(ModelKind::nls, m.grid, {}), 0.5)[0];
  const State s = maxwell_dirac_initial(m, psi, psi);
  EXPECT_LT(conserved(m, s).at("gauge_residual"), 1e-12);
}

TEST(Models, EstimatesHoldForKleinGordonAndSineGordon) {
  for (auto kind : {ModelKind::klein_gordon, ModelKind::sine_gordon}) {
    const Model m = build_model(kind, line(32), {});
    const auto reps = verify_estimates(m, 200, 1, 2.0, 7);
    for (const auto& r : reps) {
      EXPECT_EQ(r.violations, 0u) << r.inequality_id;
      EXPECT_EQ(r.sample_count, 200u);
    }
  }
}

TEST(Models, BrokenInteractionIsCaught) {
  Model m = build_model(ModelKind::klein_gordon, line(32), {});
  m.scale_J_by_norm = true;
  std::size_t v = 0;
  for (const auto& r : verify_estimates(m, 200, 1, 2.0, 7)) v += r.violations;
  EXPECT_GT(v, 0u);
}

TEST(Models, SineGordonGrowthConstantIsAtMostOne) {
  const Model m = build_model(ModelKind::sine_gordon, line(32), {});
  for (const auto& r : verify_estimates(m, 500, 0, 3.0, 3))
    if (r.inequality_id == "sg.growth") EXPECT_LE(r.fitted_constant, 1.0 + 1e-12);
}
