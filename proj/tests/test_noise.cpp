#include <wavesde/noise.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace wavesde;

namespace {
constexpr double two_pi = 2.0 * std::numbers::pi;
Grid line(int n) { return make_grid(1, {n}, {two_pi}); }
}  // namespace

TEST(Covariance, TrigonometricModesAreOrthonormal) {
  const auto modes = trigonometric_modes(line(32), 7);
  EXPECT_LT(orthonormality_defect(modes), 1e-12);
  for (const auto& f : modes)
    for (auto v : f.values) EXPECT_EQ(v.imag(), 0.0);
}

TEST(Covariance, ValidatesInputs) {
  const Grid g = line(16);
  EXPECT_THROW(default_covariance(g, 3, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(make_covariance({1.0, -1.0}, trigonometric_modes(g, 2)), std::invalid_argument);
  Field f(g);
  for (auto& v : f.values) v = 2.0;
  EXPECT_THROW(make_covariance({1.0}, {f}), std::invalid_argument);
  const auto c = default_covariance(g, 4, 0.5, 2.0);
  EXPECT_NEAR(c.trace(), 0.5 * (1 + 0.25 + 1.0 / 9 + 1.0 / 16), 1e-14);
}

TEST(Sampler, IncrementsAreReproducibleAndCoupled) {
  const QWienerSampler s(default_covariance(line(16), 3, 1.0, 2.0), 11, 4);
  EXPECT_EQ(s.mode_increments(5, 0.1), s.mode_increments(5, 0.1));
  EXPECT_NE(s.mode_increments(5, 0.1), s.fork(5).mode_increments(5, 0.1));
  const auto coarse = s.coarse_mode_increments(2, 0.01, 4);
  double sum0 = 0;
  for (int r = 0; r < 4; ++r) sum0 += s.mode_increments(8 + r, 0.01)[0];
  EXPECT_DOUBLE_EQ(coarse[0], sum0);
}

TEST(Sampler, IncrementVarianceIsDt) {
  const QWienerSampler s(default_covariance(line(16), 2, 1.0, 2.0), 3, 0);
  double acc = 0;
  const int n = 40000;
  for (int k = 0; k < n; ++k) {
    const double x = s.mode_increments(k, 0.25)[1];
    acc += x * x;
  }
  EXPECT_NEAR(acc / n, 0.25, 4 * 0.25 * std::sqrt(2.0 / n));
}

TEST(Sampler, EmpiricalCovarianceMatchesFormula) {
  const Grid g = line(32);
  const auto cov = default_covariance(g, 4, 1.0, 2.0);
  const QWienerSampler s(cov, 5, 0);
  const Field psi = sample_field(g, [](const std::vector<double>& x) { return cplx(std::cos(x[0]) + 0.3); });
  const Field phi = sample_field(g, [](const std::vector<double>& x) { return cplx(std::cos(x[0]) - std::sin(2 * x[0])); });
  const auto e = empirical_covariance(s, 0.4, 0.9, psi, phi, 20000);
  EXPECT_LE(std::abs(e.estimate - 0.4 * covariance_form(cov, psi, phi)), 3 * e.std_error);
  EXPECT_THROW(empirical_covariance(s, 0.4, 0.9, psi, phi, 10), std::invalid_argument);
}

TEST(Wiener, SecondOrderIntegralOfOneIsBetaSquaredMinusT) {
  const std::size_t K = 2000;
  const auto path = scalar_path(1, 2, 1.0, K);
  const double i2 = multiple_wiener(2, WienerKernel::constant(2, K, 1.0), path);
  const double b = path.beta[0].back();
  double qv = 0;
  for (std::size_t k = 0; k < K; ++k) qv += path.increment(0, k) * path.increment(0, k);
  // discrete identity: 2 sum_{l<k} dB_l dB_k = B^2 - sum dB^2
  EXPECT_NEAR(i2, b * b - qv, 1e-10);
  EXPECT_NEAR(qv, 1.0, 0.15);
}

TEST(Wiener, IsometryFormulas) {
  const std::size_t K = 8;
  const double dt = 1.0 / K;
  const auto f1 = WienerKernel::constant(1, K, 2.0);
  EXPECT_NEAR(wiener_isometry(1, 1, f1, f1, dt), 4.0, 1e-14);
  EXPECT_EQ(wiener_isometry(1, 2, f1, WienerKernel::constant(2, K, 1.0), dt), 0.0);
  // (2!)^2 * (1/2) sum_{l<k} dt^2 for f = 1
  EXPECT_NEAR(wiener_isometry(2, 2, WienerKernel::constant(2, K, 1.0), WienerKernel::constant(2, K, 1.0), dt),
              4.0 * (K * (K - 1) / 2) * dt * dt, 1e-14);
}

TEST(Wiener, RejectsUnsupportedInput) {
  const auto path = scalar_path(1, 2, 1.0, 4);
  EXPECT_THROW(multiple_wiener(3, WienerKernel::constant(1, 4, 1.0), path), std::invalid_argument);
  WienerKernel asym = WienerKernel::constant(2, 4, 0.0);
  asym.values[1] = 1.0;
  EXPECT_THROW(multiple_wiener(2, asym, path), std::invalid_argument);
}

TEST(Wiener, OrthogonalityAcrossOrders) {
  const auto e = orthogonality_check(1, 2, WienerKernel::constant(1, 32, 1.0), WienerKernel::constant(2, 32, 1.0), 5000, 32);
  EXPECT_LE(std::abs(e.estimate), 3 * e.std_error);
}
