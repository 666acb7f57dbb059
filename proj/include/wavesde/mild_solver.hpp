#pragma once

/// \file mild_solver.hpp
/// Time integration of
///
///     d/dt phi = -i A phi + F(phi) + Theta phi + phi dW
///
/// by Picard iteration of the mild (Duhamel) form, exponential Euler and
/// Strang split-step marching, Ito marching with the stopping rule
/// sup_{j<N} ||A^j phi|| > Lambda, and a finite-difference check that
/// z -> <phi(T; zeta + z eta), v> is holomorphic.

#include "grid.hpp"
#include "models.hpp"
#include "noise.hpp"
#include "spectral_operator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavesde {

inline constexpr double blowup_cap = 1e12;

/// Multiplication potential Theta(w) = sum_j w_j q_j for a test vector w
/// given in the coordinates of the dual vectors b_j. Affine in z by
/// construction: Theta(zeta + z eta) = Theta(zeta) + z Theta(eta).
struct ThetaPotential {
  std::vector<Field> modes;

  [[nodiscard]] bool empty() const { return modes.empty(); }

  [[nodiscard]] Field field(const CVec& w) const {
    if (modes.empty()) throw std::logic_error("empty ThetaPotential has no grid");
    if (w.size() != modes.size())
      throw std::invalid_argument("test vector has " + std::to_string(w.size()) + " coordinates, potential has " +
                                  std::to_string(modes.size()) + " modes");
    Field out(modes.front().grid);
    for (std::size_t j = 0; j < modes.size(); ++j) {
      if (w[j] == cplx{}) continue;
      for (std::size_t x = 0; x < out.size(); ++x) out.values[x] += w[j] * modes[j].values[x];
    }
    return out;
  }

  [[nodiscard]] Field field(const CVec& zeta, const CVec& eta, cplx z) const {
    CVec w(zeta.size());
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = zeta[j] + z * (eta.empty() ? cplx{} : eta[j]);
    return field(w);
  }
};

/// Theta whose modes are sqrt(lambda_i) e_i * scale: the S-transform of the
/// noise potential sum_i sqrt(lambda_i) e_i xi_i * scale.
inline ThetaPotential theta_from_covariance(const CovarianceSpec& cov, double scale = 1.0) {
  ThetaPotential th;
  for (std::size_t i = 0; i < cov.size(); ++i) {
    Field f = cov.eigenfields[i];
    f *= std::sqrt(cov.eigenvalues[i]) * scale;
    th.modes.push_back(std::move(f));
  }
  return th;
}

/// sum_{j<=N} ||A^j phi||
inline double graph_norm_sum(const SpectralOperator& A, const State& s, int N) {
  const auto v = graph_norms(A, s, N);
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc;
}

/// sup_{j<=N-1} ||A^j phi||, the stopping functional.
inline double stopping_functional(const SpectralOperator& A, const State& s, int N) {
  const auto v = graph_norms(A, s, std::max(0, N - 1));
  return *std::max_element(v.begin(), v.end());
}

struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::vector<double> graph_norm_history;  ///< sum_{j<=N} ||A^j phi(t)||
  int N = 1;
  std::optional<double> stop_time;  ///< first time the threshold was exceeded; empty if it ran to T
  bool blew_up = false;
  double sup_graph_norm_sq = 0.0;  ///< sup_t sum_{j<=N} ||A^j phi(t)||^2 up to the stop
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  [[nodiscard]] const State& final_state() const { return states.back(); }
  [[nodiscard]] bool ran_to_end() const { return !stop_time && !blew_up; }
};

namespace detail {

inline void record(Trajectory& tr, const SpectralOperator& A, double t, const State& s) {
  tr.times.push_back(t);
  tr.states.push_back(s);
  tr.graph_norm_history.push_back(graph_norm_sum(A, s, tr.N));
}

inline double graph_sq_sum(const SpectralOperator& A, const State& s, int N) {
  double acc = 0.0;
  for (double x : graph_norms(A, s, N)) acc += x * x;
  return acc;
}

inline std::size_t step_count(double T, double dt) {
  if (!(dt > 0.0) || !(T > 0.0)) throw std::invalid_argument("time step and horizon must be positive");
  const double r = T / dt;
  const auto n = static_cast<std::size_t>(std::llround(r));
  if (n == 0 || std::abs(r - double(n)) > 1e-9 * std::max(1.0, r))
    throw std::invalid_argument("dt must divide T");
  return n;
}

}  // namespace detail

// --------------------------------------------------------------------------
// Picard iteration of the mild form
// --------------------------------------------------------------------------

struct PicardResult {
  Trajectory trajectory;
  std::vector<double> iteration_residuals;
  bool converged = false;
  bool blew_up = false;
  /// Distance between the returned iterate and its image under the map.
  double fixed_point_residual = std::numeric_limits<double>::quiet_NaN();
};

struct PicardOptions {
  std::size_t n_time_nodes = 65;  ///< nodes including both ends
  double tol = 1e-10;
  std::size_t max_iter = 200;
};

namespace detail {

/// One application of the mild map on the node set:
///   (J phi)(t_m) = U(t_m) phi0 + int_0^{t_m} U(t_m - s) G(phi(s)) ds,
/// with G = F + Theta phi and the trapezoidal recursion
///   I_m = U(h)(I_{m-1} + h/2 G_{m-1}) + h/2 G_m.
inline std::vector<State> mild_map(const Model& model, const std::vector<State>& free, const std::vector<State>& phi,
                                   const Field* theta, double h) {
  const auto& A = model.generator;
  const std::size_t n = phi.size();
  auto G = [&](const State& s) {
    State g = nonlinear_rhs(model, s);
    if (theta) g += multiply_pointwise(s, *theta);
    return g;
  };
  std::vector<State> out(n);
  State I = phi[0].zeros_like();
  State g_prev = G(phi[0]);
  out[0] = free[0];
  for (std::size_t m = 1; m < n; ++m) {
    State tmp = I;
    axpy(0.5 * h, g_prev, tmp);
    I = propagate(A, h, tmp);
    State g = G(phi[m]);
    axpy(0.5 * h, g, I);
    out[m] = free[m] + I;
    g_prev = std::move(g);
  }
  return out;
}

inline double path_distance(const SpectralOperator& A, const std::vector<State>& a, const std::vector<State>& b, int N) {
  double d = 0.0;
  for (std::size_t m = 0; m < a.size(); ++m) d = std::max(d, graph_norm_sum(A, a[m] - b[m], N));
  return d;
}

}  // namespace detail

/// Picard iteration of the mild form with potential Theta(zeta + z eta),
/// starting from the free evolution. Stops when the sup-in-time distance
/// sum_{j<=N} ||A^j (phi^{k+1} - phi^k)|| drops to `tol`.
inline PicardResult picard_solve(const Model& model, const State& phi0, double T, const ThetaPotential& theta,
                                 const CVec& zeta, const CVec& eta, cplx z, const PicardOptions& opt = {}) {
  if (!(opt.tol > 0.0)) throw std::invalid_argument("picard_solve: tol must be positive");
  if (!(T > 0.0)) throw std::invalid_argument("picard_solve: T must be positive");
  if (opt.n_time_nodes < 2) throw std::invalid_argument("picard_solve: need at least two time nodes");
  const auto& A = model.generator;
  const int N = model.params.N;
  const std::size_t n = opt.n_time_nodes;
  const double h = T / double(n - 1);

  std::optional<Field> th;
  if (!theta.empty()) th = theta.field(zeta, eta, z);
  const Field* thp = th ? &*th : nullptr;

  std::vector<State> free(n);
  free[0] = phi0;
  for (std::size_t m = 1; m < n; ++m) free[m] = propagate(A, h, free[m - 1]);

  PicardResult res;
  std::vector<State> cur = free;
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    auto next = detail::mild_map(model, free, cur, thp, h);
    const double r = detail::path_distance(A, next, cur, N);
    res.iteration_residuals.push_back(r);
    cur = std::move(next);
    if (!std::isfinite(r) || r > blowup_cap) {
      res.blew_up = true;
      break;
    }
    if (r <= opt.tol) {
      res.converged = true;
      break;
    }
  }
  if (!res.blew_up) {
    const auto img = detail::mild_map(model, free, cur, thp, h);
    res.fixed_point_residual = detail::path_distance(A, img, cur, N);
  }
  auto& tr = res.trajectory;
  tr.N = N;
  tr.blew_up = res.blew_up;
  for (std::size_t m = 0; m < n; ++m) {
    detail::record(tr, A, h * double(m), cur[m]);
    tr.sup_graph_norm_sq = std::max(tr.sup_graph_norm_sq, detail::graph_sq_sum(A, cur[m], N));
  }
  return res;
}

/// Geometric mean of the first `count` successive residual ratios. The
/// Picard map of a Volterra equation contracts like (LT)^k / k!, so the
/// early ratios scale linearly in T.
inline double contraction_ratio(const std::vector<double>& residuals, std::size_t count = 3) {
  if (residuals.size() < count + 1) throw std::invalid_argument("contraction_ratio: not enough residuals");
  double acc = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    if (!(residuals[k] > 0.0) || !(residuals[k + 1] > 0.0)) throw std::invalid_argument("contraction_ratio: zero residual");
    acc += std::log(residuals[k + 1] / residuals[k]);
  }
  return std::exp(acc / double(count));
}

// --------------------------------------------------------------------------
// Marching schemes
// --------------------------------------------------------------------------

/// phi_{n+1} = exp(-i A dt)(phi_n + dt F(phi_n) + dt Theta phi_n + phi_n dW).
/// `dW` may be empty (deterministic step), as may `theta`.
inline State step_exp_euler(const Model& model, const State& state, double dt, const Field* dW = nullptr,
                            const Field* theta = nullptr) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_exp_euler: dt must be positive");
  State rhs = state;
  axpy(dt, nonlinear_rhs(model, state), rhs);
  if (theta) axpy(dt, multiply_pointwise(state, *theta), rhs);
  if (dW) rhs += multiply_pointwise(state, *dW);
  State out = propagate(model.generator, dt, rhs);
  if (!out.all_finite()) throw std::runtime_error("step_exp_euler: non-finite state (blow-up)");
  return out;
}

/// Strang splitting: half interaction flow, exact linear step, half flow.
inline State step_strang(const Model& model, const State& state, double dt) {
  State s = nonlinear_flow(model, state, 0.5 * dt);
  s = propagate(model.generator, dt, s);
  s = nonlinear_flow(model, s, 0.5 * dt);
  if (!s.all_finite()) throw std::runtime_error("step_strang: non-finite state (blow-up)");
  return s;
}

enum class Scheme { exp_euler, strang };

/// Deterministic run on [0, T]; every `record_every`-th state is kept
/// along with the final one.
inline Trajectory solve_deterministic(const Model& model, const State& phi0, double T, double dt, Scheme scheme,
                                      std::size_t record_every = 1, const Field* theta = nullptr) {
  const std::size_t steps = detail::step_count(T, dt);
  const auto& A = model.generator;
  Trajectory tr;
  tr.N = model.params.N;
  State s = phi0;
  detail::record(tr, A, 0.0, s);
  tr.sup_graph_norm_sq = detail::graph_sq_sum(A, s, tr.N);
  for (std::size_t k = 0; k < steps; ++k) {
    s = scheme == Scheme::strang ? step_strang(model, s, dt) : step_exp_euler(model, s, dt, nullptr, theta);
    if (record_every == 0 || (k + 1) % record_every == 0 || k + 1 == steps) {
      detail::record(tr, A, dt * double(k + 1), s);
      tr.sup_graph_norm_sq = std::max(tr.sup_graph_norm_sq, detail::graph_sq_sum(A, s, tr.N));
    }
  }
  return tr;
}

/// Source of noise fields for step k of length dt.
using IncrementSource = std::function<std::optional<Field>(std::uint64_t step, double dt)>;

inline IncrementSource increments_from(const QWienerSampler& sampler) {
  return [sampler](std::uint64_t step, double dt) -> std::optional<Field> { return increment(sampler, dt, step); };
}

/// Coarse increments over `ratio` fine steps of `fine_dt`, built by
/// summing the fine ones (pathwise coupling across a dt ladder).
inline IncrementSource coupled_increments(const QWienerSampler& sampler, double fine_dt, std::uint64_t ratio) {
  return [sampler, fine_dt, ratio](std::uint64_t step, double) -> std::optional<Field> {
    return sampler.field(sampler.coarse_mode_increments(step, fine_dt, ratio));
  };
}

struct ItoOptions {
  std::size_t record_every = 1;  ///< 0 keeps only the endpoints
  const Field* theta = nullptr;
};

/// Exponential-Euler Ito march with stopping at the first grid time where
/// sup_{j<=N-1} ||A^j phi|| > Lambda. Blow-up (non-finite values or norms
/// above 1e12) ends the path with blew_up set.
inline Trajectory solve_ito(const Model& model, const State& phi0, double T, double dt, const IncrementSource& noise,
                            double Lambda, int N, const ItoOptions& opt = {}) {
  if (N < 1) throw std::invalid_argument("solve_ito: N must be >= 1");
  const auto& A = model.generator;
  if (!(Lambda > stopping_functional(A, phi0, N)))
    throw std::invalid_argument("solve_ito: Lambda must exceed the initial stopping functional");
  const std::size_t steps = detail::step_count(T, dt);
  Trajectory tr;
  tr.N = N;
  State s = phi0;
  detail::record(tr, A, 0.0, s);
  tr.sup_graph_norm_sq = detail::graph_sq_sum(A, s, N);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = dt * double(k + 1);
    auto dW = noise ? noise(k, dt) : std::nullopt;
    try {
      s = step_exp_euler(model, s, dt, dW ? &*dW : nullptr, opt.theta);
    } catch (const std::runtime_error&) {
      tr.blew_up = true;
      tr.stop_time = t;
      break;
    }
    const auto norms = graph_norms(A, s, N);
    double sum = 0.0, sum_sq = 0.0, stop = 0.0;
    for (int j = 0; j <= N; ++j) {
      sum += norms[j];
      sum_sq += norms[j] * norms[j];
      if (j <= N - 1) stop = std::max(stop, norms[j]);
    }
    const bool last = k + 1 == steps;
    if (!std::isfinite(sum) || sum > blowup_cap) {
      tr.blew_up = true;
      tr.stop_time = t;
      tr.times.push_back(t);
      tr.states.push_back(s);
      tr.graph_norm_history.push_back(sum);
      break;
    }
    tr.sup_graph_norm_sq = std::max(tr.sup_graph_norm_sq, sum_sq);
    const bool stopped = stop > Lambda;
    if (stopped || last || (opt.record_every != 0 && (k + 1) % opt.record_every == 0)) {
      tr.times.push_back(t);
      tr.states.push_back(s);
      tr.graph_norm_history.push_back(sum);
    }
    if (stopped) {
      tr.stop_time = t;
      break;
    }
  }
  return tr;
}

inline Trajectory solve_ito(const Model& model, const State& phi0, double T, double dt, const QWienerSampler& sampler,
                            double Lambda, int N, const ItoOptions& opt = {}) {
  Trajectory tr = solve_ito(model, phi0, T, dt, increments_from(sampler), Lambda, N, opt);
  tr.seed = sampler.master_seed;
  tr.stream = sampler.stream_id;
  return tr;
}

// --------------------------------------------------------------------------
// Holomorphy in z
// --------------------------------------------------------------------------

/// Bilinear pairing sum_c int phi_c v_c (no conjugation), so that it is
/// holomorphic in phi.
inline cplx state_pairing(const State& phi, const State& v) {
  cplx acc{};
  for (std::size_t c = 0; c < phi.count(); ++c) acc += pairing(phi[c], v[c]);
  return acc;
}

struct HolomorphyStencil {
  std::vector<cplx> centers{cplx{}};
  double h = 1e-2;
};

/// Max over stencil centers of |d_y f - i d_x f| for f(z) = <phi(T; z), v>,
/// both derivatives by five-point fourth-order central differences. Each
/// evaluation is a converged picard_solve; non-convergence throws.
inline double holomorphy_check(const Model& model, const State& phi0, double T, const ThetaPotential& theta,
                               const CVec& zeta, const CVec& eta, const HolomorphyStencil& stencil, const State& v,
                               const PicardOptions& opt = {}) {
  if (!(stencil.h > 0.0)) throw std::invalid_argument("holomorphy_check: stencil spacing must be positive");
  auto f = [&](cplx z) {
    auto r = picard_solve(model, phi0, T, theta, zeta, eta, z, opt);
    if (!r.converged) throw std::runtime_error("holomorphy_check: Picard iteration did not converge");
    return state_pairing(r.trajectory.final_state(), v);
  };
  const double h = stencil.h;
  const cplx I(0.0, 1.0);
  double worst = 0.0;
  for (cplx z0 : stencil.centers) {
    auto d = [&](cplx dir) {
      return (f(z0 - 2.0 * h * dir) - 8.0 * f(z0 - h * dir) + 8.0 * f(z0 + h * dir) - f(z0 + 2.0 * h * dir)) / (12.0 * h);
    };
    const cplx fx = d(1.0), fy = d(I);
    worst = std::max(worst, std::abs(fy - I * fx));
  }
  return worst;
}

}  // namespace wavesde
