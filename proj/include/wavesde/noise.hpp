#pragma once

/// \file noise.hpp
/// Q-Wiener increments from the eigen-series W = sum sqrt(lambda_i) e_i beta_i,
/// scalar Brownian paths and discrete multiple Wiener integrals (orders 1, 2).

#include "grid.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavesde {

struct CovarianceSpec {
  std::vector<double> eigenvalues;
  std::vector<Field> eigenfields;

  [[nodiscard]] std::size_t size() const { return eigenvalues.size(); }
  [[nodiscard]] double trace() const { return std::accumulate(eigenvalues.begin(), eigenvalues.end(), 0.0); }
  [[nodiscard]] bool empty() const { return eigenvalues.empty(); }
};

/// Max |<e_i, e_j> - delta_ij| over all pairs.
inline double orthonormality_defect(const std::vector<Field>& fields) {
  double worst = 0.0;
  for (std::size_t i = 0; i < fields.size(); ++i)
    for (std::size_t j = i; j < fields.size(); ++j)
      worst = std::max(worst, std::abs(inner(fields[i], fields[j]) - (i == j ? 1.0 : 0.0)));
  return worst;
}

/// Validating constructor: positive finite eigenvalues, orthonormal fields.
inline CovarianceSpec make_covariance(std::vector<double> eigenvalues, std::vector<Field> eigenfields) {
  if (eigenvalues.size() != eigenfields.size())
    throw std::invalid_argument("covariance: one eigenfield per eigenvalue required");
  for (double l : eigenvalues)
    if (!(l > 0.0) || !std::isfinite(l)) throw std::invalid_argument("covariance eigenvalues must be positive and finite");
  for (std::size_t i = 1; i < eigenfields.size(); ++i)
    if (!(eigenfields[i].grid == eigenfields[0].grid)) throw std::invalid_argument("covariance eigenfields on different grids");
  if (orthonormality_defect(eigenfields) > 1e-10) throw std::invalid_argument("covariance eigenfields are not orthonormal");
  return {std::move(eigenvalues), std::move(eigenfields)};
}

/// Real trigonometric modes on the grid ordered by |k|^2: the constant,
/// then sqrt(2/|D|) cos(k.x), sqrt(2/|D|) sin(k.x) per wavevector pair.
/// Nyquist modes are skipped.
inline std::vector<Field> trigonometric_modes(const Grid& g, std::size_t count) {
  struct Entry { double k2; std::size_t flat; };
  std::vector<Entry> reps;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.is_nyquist(k)) continue;
    const auto m = g.mode_index(k);
    // keep one representative of each +-k pair: first nonzero label positive
    bool keep = true;
    for (int v : m) {
      if (v == 0) continue;
      keep = v > 0;
      break;
    }
    if (keep) reps.push_back({g.k_squared(k), k});
  }
  std::stable_sort(reps.begin(), reps.end(), [](const Entry& a, const Entry& b) { return a.k2 < b.k2; });
  const double vol = g.volume();
  std::vector<Field> out;
  for (const auto& e : reps) {
    if (out.size() >= count) break;
    std::vector<double> kv(g.dim());
    for (int a = 0; a < g.dim(); ++a) kv[a] = g.k_component(e.flat, a);
    auto phase = [&](const std::vector<double>& x) {
      double s = 0.0;
      for (int a = 0; a < g.dim(); ++a) s += kv[a] * x[a];
      return s;
    };
    if (e.k2 == 0.0) {
      out.push_back(sample_field(g, [&](const auto&) { return cplx(1.0 / std::sqrt(vol)); }));
      continue;
    }
    out.push_back(sample_field(g, [&](const auto& x) { return cplx(std::sqrt(2.0 / vol) * std::cos(phase(x))); }));
    if (out.size() >= count) break;
    out.push_back(sample_field(g, [&](const auto& x) { return cplx(std::sqrt(2.0 / vol) * std::sin(phase(x))); }));
  }
  if (out.size() < count) throw std::invalid_argument("grid too small for " + std::to_string(count) + " noise modes");
  return out;
}

/// Default covariance: trigonometric modes with lambda_i = lambda0 * i^{-gamma}.
inline CovarianceSpec default_covariance(const Grid& g, std::size_t count, double lambda0, double gamma) {
  if (count == 0) throw std::invalid_argument("covariance needs at least one mode");
  if (!(gamma > 1.0)) throw std::invalid_argument("covariance decay gamma must exceed 1");
  std::vector<double> lam(count);
  for (std::size_t i = 0; i < count; ++i) lam[i] = lambda0 * std::pow(double(i + 1), -gamma);
  return make_covariance(std::move(lam), trigonometric_modes(g, count));
}

/// Field sum_i w_i sqrt(lambda_i) e_i for mode weights w.
inline Field noise_field(const CovarianceSpec& spec, const std::vector<double>& mode_weights) {
  Field out(spec.eigenfields.at(0).grid);
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const double s = std::sqrt(spec.eigenvalues[i]) * mode_weights[i];
    if (s == 0.0) continue;
    const auto& e = spec.eigenfields[i].values;
    for (std::size_t x = 0; x < out.size(); ++x) out.values[x] += s * e[x];
  }
  return out;
}

/// Deterministic source of Q-Wiener increments. Step `s` of stream `id`
/// always yields the same draws.
struct QWienerSampler {
  std::shared_ptr<const CovarianceSpec> spec;
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;

  QWienerSampler() = default;
  QWienerSampler(CovarianceSpec s, std::uint64_t seed, std::uint64_t stream)
      : spec(std::make_shared<const CovarianceSpec>(std::move(s))), master_seed(seed), stream_id(stream) {}

  [[nodiscard]] QWienerSampler fork(std::uint64_t stream) const {
    QWienerSampler out = *this;
    out.stream_id = stream;
    return out;
  }

  /// Brownian increments beta_i(t+dt) - beta_i(t) of every mode at `step`.
  [[nodiscard]] std::vector<double> mode_increments(std::uint64_t step, double dt) const {
    if (!(dt > 0.0)) throw std::invalid_argument("increment: dt must be positive");
    std::vector<double> out(spec->size());
    const double s = std::sqrt(dt);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * counter_normal(master_seed, stream_id, step, i);
    return out;
  }

  /// Sum of `ratio` consecutive fine increments starting at fine step
  /// `coarse_step * ratio`: the coupled coarse increment.
  [[nodiscard]] std::vector<double> coarse_mode_increments(std::uint64_t coarse_step, double fine_dt, std::uint64_t ratio) const {
    std::vector<double> out(spec->size(), 0.0);
    for (std::uint64_t r = 0; r < ratio; ++r) {
      const auto d = mode_increments(coarse_step * ratio + r, fine_dt);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i];
    }
    return out;
  }

  [[nodiscard]] Field field(const std::vector<double>& mode_increments) const { return noise_field(*spec, mode_increments); }
};

/// Delta W = sum_i sqrt(lambda_i) e_i sqrt(dt) xi_i at the given step.
inline Field increment(const QWienerSampler& sampler, double dt, std::uint64_t step = 0) {
  return sampler.field(sampler.mode_increments(step, dt));
}

/// Per-mode Brownian values on a time partition; beta[i][0] = 0.
struct BrownianPath {
  std::vector<double> times;
  std::vector<std::vector<double>> beta;

  [[nodiscard]] std::size_t intervals() const { return times.empty() ? 0 : times.size() - 1; }
  [[nodiscard]] double increment(std::size_t mode, std::size_t k) const { return beta[mode][k + 1] - beta[mode][k]; }
};

/// Path on the uniform partition of [0, T] with `steps` intervals.
inline BrownianPath sample_path(const QWienerSampler& sampler, double T, std::size_t steps) {
  if (!(T > 0.0) || steps == 0) throw std::invalid_argument("sample_path: need T > 0 and steps >= 1");
  BrownianPath p;
  const double dt = T / double(steps);
  p.times.resize(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) p.times[k] = dt * double(k);
  p.beta.assign(sampler.spec->size(), std::vector<double>(steps + 1, 0.0));
  for (std::size_t k = 0; k < steps; ++k) {
    const auto d = sampler.mode_increments(k, dt);
    for (std::size_t i = 0; i < d.size(); ++i) p.beta[i][k + 1] = p.beta[i][k] + d[i];
  }
  return p;
}

/// Scalar standard Brownian path (one mode) addressed by (seed, stream).
inline BrownianPath scalar_path(std::uint64_t seed, std::uint64_t stream, double T, std::size_t steps) {
  if (!(T > 0.0) || steps == 0) throw std::invalid_argument("scalar_path: need T > 0 and steps >= 1");
  BrownianPath p;
  const double dt = T / double(steps);
  p.times.resize(steps + 1);
  p.beta.assign(1, std::vector<double>(steps + 1, 0.0));
  for (std::size_t k = 0; k <= steps; ++k) p.times[k] = dt * double(k);
  for (std::size_t k = 0; k < steps; ++k) p.beta[0][k + 1] = p.beta[0][k] + std::sqrt(dt) * counter_normal(seed, stream, k, 0);
  return p;
}

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

namespace detail {

struct RunningMoments {
  double sum = 0.0, sum_sq = 0.0;
  std::size_t n = 0;
  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  [[nodiscard]] McEstimate result() const {
    McEstimate r;
    r.samples = n;
    r.estimate = sum / double(n);
    const double var = n > 1 ? std::max(0.0, (sum_sq - sum * sum / double(n)) / double(n - 1)) : 0.0;
    r.std_error = std::sqrt(var / double(n));
    return r;
  }
};

}  // namespace detail

/// (Q psi, phi) for real test fields: sum_i lambda_i Re<e_i,psi> Re<e_i,phi>.
inline double covariance_form(const CovarianceSpec& spec, const Field& psi, const Field& phi) {
  double s = 0.0;
  for (std::size_t i = 0; i < spec.size(); ++i)
    s += spec.eigenvalues[i] * inner(spec.eigenfields[i], psi).real() * inner(spec.eigenfields[i], phi).real();
  return s;
}

/// Monte Carlo estimate of E[(W(t),psi)(W(tau),phi)] with the real pairing
/// (W,psi) = Re<psi, W>. Path p uses stream (sampler.stream_id, p).
inline McEstimate empirical_covariance(const QWienerSampler& sampler, double t, double tau, const Field& psi,
                                       const Field& phi, std::size_t n_paths) {
  if (!(t > 0.0) || !(tau > 0.0)) throw std::invalid_argument("empirical_covariance: times must be positive");
  if (n_paths < 1000) throw std::invalid_argument("empirical_covariance: need at least 1000 paths");
  const auto& spec = *sampler.spec;
  std::vector<double> ps(spec.size()), pp(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    ps[i] = std::sqrt(spec.eigenvalues[i]) * inner(psi, spec.eigenfields[i]).real();
    pp[i] = std::sqrt(spec.eigenvalues[i]) * inner(phi, spec.eigenfields[i]).real();
  }
  const double t1 = std::min(t, tau), t2 = std::max(t, tau);
  detail::RunningMoments acc;
  for (std::size_t p = 0; p < n_paths; ++p) {
    const auto s = sampler.fork(detail::splitmix64(sampler.stream_id) ^ p);
    const auto b1 = s.mode_increments(0, t1);
    std::vector<double> b2 = b1;
    if (t2 > t1) {
      const auto d = s.mode_increments(1, t2 - t1);
      for (std::size_t i = 0; i < b2.size(); ++i) b2[i] += d[i];
    }
    const auto& bt = t <= tau ? b1 : b2;
    const auto& btau = t <= tau ? b2 : b1;
    double x = 0.0, y = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
      x += ps[i] * bt[i];
      y += pp[i] * btau[i];
    }
    acc.add(x * y);
  }
  return acc.result();
}

/// Piecewise-constant kernel on a path's partition: order 1 holds one value
/// per interval, order 2 a symmetric intervals x intervals matrix (row-major).
struct WienerKernel {
  int order = 1;
  std::size_t intervals = 0;
  std::vector<double> values;

  static WienerKernel constant(int order, std::size_t intervals, double c) {
    if (order != 1 && order != 2) throw std::invalid_argument("multiple Wiener integrals of order " + std::to_string(order) + " are not supported");
    return {order, intervals, std::vector<double>(order == 1 ? intervals : intervals * intervals, c)};
  }
  [[nodiscard]] double at(std::size_t k) const { return values[k]; }
  [[nodiscard]] double at(std::size_t k, std::size_t l) const { return values[k * intervals + l]; }
};

/// Discrete iterated Ito sum on one mode of the path:
///   n = 1: sum_k f_k dB_k
///   n = 2: 2 sum_k sum_{l<k} f_{kl} dB_l dB_k
inline double multiple_wiener(int n, const WienerKernel& f, const BrownianPath& path, std::size_t mode = 0) {
  if (n != 1 && n != 2) throw std::invalid_argument("multiple Wiener integrals of order " + std::to_string(n) + " are not supported");
  if (f.order != n) throw std::invalid_argument("kernel order does not match n");
  const std::size_t K = path.intervals();
  if (f.intervals != K || f.values.size() != (n == 1 ? K : K * K))
    throw std::invalid_argument("kernel is not defined on the path's partition");
  if (n == 1) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += f.at(k) * path.increment(mode, k);
    return s;
  }
  double scale = 0.0;
  for (double v : f.values) scale = std::max(scale, std::abs(v));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t l = 0; l < k; ++l)
      if (std::abs(f.at(k, l) - f.at(l, k)) > 1e-12 * std::max(1.0, scale))
        throw std::invalid_argument("order-2 kernel must be symmetric");
  double s = 0.0;
  for (std::size_t k = 1; k < K; ++k) {
    double inner_sum = 0.0;
    for (std::size_t l = 0; l < k; ++l) inner_sum += f.at(k, l) * path.increment(mode, l);
    s += inner_sum * path.increment(mode, k);
  }
  return 2.0 * s;
}

/// Exact second moment of the discrete integrals: (n!)^2 times the kernel
/// inner product over the ordered simplex (t_n < ... < t_1), and 0 for n != m.
inline double wiener_isometry(int n, int m, const WienerKernel& f, const WienerKernel& g, double dt) {
  if (n != m) return 0.0;
  if (n == 1) {
    double s = 0.0;
    for (std::size_t k = 0; k < f.intervals; ++k) s += f.at(k) * g.at(k);
    return s * dt;
  }
  double s = 0.0;
  for (std::size_t k = 1; k < f.intervals; ++k)
    for (std::size_t l = 0; l < k; ++l) s += f.at(k, l) * g.at(k, l);
  return 4.0 * s * dt * dt;
}

/// Monte Carlo estimate of E[I_n(f) I_m(g)] on scalar paths over [0, T].
inline McEstimate orthogonality_check(int n, int m, const WienerKernel& f, const WienerKernel& g, std::size_t n_paths,
                                      std::size_t steps, double T = 1.0, std::uint64_t seed = 7) {
  if ((n != 1 && n != 2) || (m != 1 && m != 2)) throw std::invalid_argument("orthogonality_check: n, m must be 1 or 2");
  detail::RunningMoments acc;
  for (std::size_t p = 0; p < n_paths; ++p) {
    const auto path = scalar_path(seed, p, T, steps);
    acc.add(multiple_wiener(n, f, path) * multiple_wiener(m, g, path));
  }
  return acc.result();
}

}  // namespace wavesde
