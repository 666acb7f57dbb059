#pragma once

/// \file mc_harness.hpp
/// Ensembles of Ito paths, strong/weak order fits on coupled dt ladders,
/// the empirical survival curve of the stopping time, and Monte Carlo vs
/// Wiener chaos cross-checks.
///
/// Path p always uses noise stream p, results land in an index-ordered
/// buffer and are reduced sequentially, so the worker count never changes
/// a single bit of the output.

#include "chaos.hpp"
#include "mild_solver.hpp"
#include "models.hpp"
#include "noise.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace wavesde {

/// Named scalar functional of a finished path.
struct Observable {
  std::string name;
  std::function<double(const Trajectory&)> eval;
};

inline Observable observable_norm_sq(const SpectralOperator& A) {
  return {"norm_sq", [A](const Trajectory& t) {
            const double n = graph_norm(A, t.final_state(), 0);
            return n * n;
          }};
}

inline Observable observable_sup_graph_sq() {
  return {"sup_graph_norm_sq", [](const Trajectory& t) { return t.sup_graph_norm_sq; }};
}

inline Observable observable_pairing_re(std::string name, State v) {
  return {std::move(name), [v](const Trajectory& t) { return state_pairing(t.final_state(), v).real(); }};
}

inline Observable observable_conserved(const Model& model, const std::string& key) {
  return {key, [model, key](const Trajectory& t) { return conserved(model, t.final_state()).at(key); }};
}

struct EnsembleConfig {
  Model model;
  State initial;
  double T = 1.0;
  double dt = 1e-2;
  double Lambda = std::numeric_limits<double>::infinity();
  int N = 1;
  CovarianceSpec covariance;  ///< empty means no noise
  std::size_t n_paths = 100;
  std::uint64_t master_seed = 1;
  std::vector<Observable> observables;
  unsigned workers = 1;
  const Field* theta = nullptr;
};

struct ObservableStats {
  double mean = 0.0;
  double variance = 0.0;
  double std_error = 0.0;
};

struct EnsembleResult {
  std::map<std::string, ObservableStats> observables;
  std::vector<double> stop_times;  ///< per path; NaN if it ran to T
  std::vector<std::size_t> stop_histogram;  ///< stop times in `histogram_bins` equal bins of [0, T]
  std::size_t stopped = 0;
  std::size_t blown_up = 0;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> path_seeds;  ///< (master seed, stream)
  ObservableStats sup_graph_norm_sq;
  double initial_graph_norm_sq = 0.0;
  double moment_ratio = 0.0;  ///< E sup sum ||A^j phi||^2 / sum ||A^j phi0||^2
  std::vector<State> final_states;  ///< kept only when requested
};

namespace detail {

inline void validate(const EnsembleConfig& c) {
  if (c.n_paths < 2) throw std::invalid_argument("ensemble needs at least 2 paths");
  step_count(c.T, c.dt);
}

/// Runs fn(p) for p in [0, n) on `workers` threads; fn writes only slot p.
template <class Fn>
void parallel_for_paths(std::size_t n, unsigned workers, Fn&& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
  if (workers == 1) {
    for (std::size_t p = 0; p < n; ++p) fn(p);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t p; (p = next.fetch_add(1)) < n;) {
        try {
          fn(p);
        } catch (...) {
          std::lock_guard lock(err_mutex);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

inline ObservableStats stats_of(const std::vector<double>& xs) {
  ObservableStats s;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / double(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.variance = xs.size() > 1 ? ss / double(xs.size() - 1) : 0.0;
  s.std_error = std::sqrt(s.variance / double(xs.size()));
  return s;
}

}  // namespace detail

/// n_paths independent Ito paths; stream id = path index.
inline EnsembleResult run_ensemble(const EnsembleConfig& cfg, bool keep_final_states = false, std::size_t histogram_bins = 10) {
  detail::validate(cfg);
  const std::size_t n = cfg.n_paths;
  std::vector<std::vector<double>> obs(n);
  std::vector<double> stop(n), sup(n);
  std::vector<char> blew(n);
  std::vector<State> finals(keep_final_states ? n : 0);
  std::shared_ptr<const CovarianceSpec> cov = std::make_shared<const CovarianceSpec>(cfg.covariance);
  detail::parallel_for_paths(n, cfg.workers, [&](std::size_t p) {
    IncrementSource src;
    if (!cov->empty()) {
      QWienerSampler s;
      s.spec = cov;
      s.master_seed = cfg.master_seed;
      s.stream_id = p;
      src = increments_from(s);
    }
    ItoOptions o;
    o.record_every = 0;
    o.theta = cfg.theta;
    Trajectory tr = solve_ito(cfg.model, cfg.initial, cfg.T, cfg.dt, src, cfg.Lambda, cfg.N, o);
    tr.seed = cfg.master_seed;
    tr.stream = p;
    obs[p].reserve(cfg.observables.size());
    for (const auto& ob : cfg.observables) obs[p].push_back(ob.eval(tr));
    stop[p] = tr.stop_time ? *tr.stop_time : std::numeric_limits<double>::quiet_NaN();
    sup[p] = tr.sup_graph_norm_sq;
    blew[p] = tr.blew_up;
    if (keep_final_states) finals[p] = tr.final_state();
  });

  EnsembleResult r;
  for (std::size_t k = 0; k < cfg.observables.size(); ++k) {
    std::vector<double> xs(n);
    for (std::size_t p = 0; p < n; ++p) xs[p] = obs[p][k];
    r.observables[cfg.observables[k].name] = detail::stats_of(xs);
  }
  r.stop_times = stop;
  r.stop_histogram.assign(histogram_bins, 0);
  for (std::size_t p = 0; p < n; ++p) {
    r.path_seeds.emplace_back(cfg.master_seed, p);
    if (blew[p]) ++r.blown_up;
    if (!std::isnan(stop[p])) {
      ++r.stopped;
      const auto bin = std::min<std::size_t>(histogram_bins - 1, static_cast<std::size_t>(stop[p] / cfg.T * histogram_bins));
      ++r.stop_histogram[bin];
    }
  }
  r.sup_graph_norm_sq = detail::stats_of(sup);
  r.initial_graph_norm_sq = detail::graph_sq_sum(cfg.model.generator, cfg.initial, cfg.N);
  r.moment_ratio = r.initial_graph_norm_sq > 0 ? r.sup_graph_norm_sq.mean / r.initial_graph_norm_sq : 0.0;
  if (keep_final_states) r.final_states = std::move(finals);
  return r;
}

// --------------------------------------------------------------------------
// Convergence orders
// --------------------------------------------------------------------------

struct OrderFit {
  double order = std::numeric_limits<double>::quiet_NaN();
  double fit_residual = 0.0;  ///< rms of log-log residuals
  std::vector<double> dts;    ///< ladder without the reference
  std::vector<double> errors;
  std::vector<double> std_errors;
  std::vector<char> used;  ///< point kept by the noise-floor filter
  bool monotone = true;
  bool skipped = false;  ///< fewer than two usable points (e.g. roundoff-level errors)
};

namespace detail {

/// Least squares of log e against log dt over the kept points.
inline void fit_order(OrderFit& f, double floor_abs) {
  std::vector<double> lx, ly;
  f.used.assign(f.dts.size(), 0);
  for (std::size_t i = 0; i < f.dts.size(); ++i) {
    const double floor = std::max(floor_abs, f.std_errors[i]);
    if (f.errors[i] > 10.0 * floor) {
      f.used[i] = 1;
      lx.push_back(std::log(f.dts[i]));
      ly.push_back(std::log(f.errors[i]));
    }
  }
  // ladder is sorted coarse to fine: errors should decrease
  for (std::size_t i = 1; i < f.errors.size(); ++i)
    if (f.errors[i] > f.errors[i - 1]) f.monotone = false;
  if (lx.size() < 2) {
    f.skipped = true;
    return;
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= lx.size();
  my /= ly.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  f.order = sxy / sxx;
  double rr = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double e = ly[i] - (my + f.order * (lx[i] - mx));
    rr += e * e;
  }
  f.fit_residual = std::sqrt(rr / lx.size());
}

inline std::vector<std::uint64_t> ladder_ratios(const std::vector<double>& ladder, double T) {
  if (ladder.size() < 2) throw std::invalid_argument("dt ladder needs at least two entries");
  for (std::size_t i = 1; i < ladder.size(); ++i)
    if (!(ladder[i] < ladder[i - 1])) throw std::invalid_argument("dt ladder must be strictly decreasing");
  const double fine = ladder.back();
  step_count(T, fine);
  std::vector<std::uint64_t> r;
  for (double dt : ladder) {
    const double q = dt / fine;
    const auto k = static_cast<std::uint64_t>(std::llround(q));
    if (std::abs(q - double(k)) > 1e-9 * q) throw std::invalid_argument("every dt must be a multiple of the finest dt");
    step_count(T, dt);
    r.push_back(k);
  }
  return r;
}

/// Final states of one path at every ladder dt, coarse noise built by
/// summing the finest increments.
inline std::vector<State> ladder_path(const EnsembleConfig& c, const std::vector<double>& ladder,
                                      const std::vector<std::uint64_t>& ratios, std::size_t p) {
  std::vector<State> out;
  const double fine = ladder.back();
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    IncrementSource src;
    if (!c.covariance.empty()) src = coupled_increments(QWienerSampler(c.covariance, c.master_seed, p), fine, ratios[i]);
    ItoOptions o;
    o.record_every = 0;
    o.theta = c.theta;
    out.push_back(solve_ito(c.model, c.initial, c.T, ladder[i], src, c.Lambda, c.N, o).final_state());
  }
  return out;
}

}  // namespace detail

/// Strong error E||phi_dt(T) - phi_ref(T)|| on a coupled ladder, reference
/// = finest dt (the last entry), fitted on log-log.
inline OrderFit strong_order(const EnsembleConfig& cfg, const std::vector<double>& dt_ladder) {
  const auto ratios = detail::ladder_ratios(dt_ladder, cfg.T);
  const std::size_t n = cfg.covariance.empty() ? 1 : cfg.n_paths;
  const std::size_t L = dt_ladder.size() - 1;
  std::vector<std::vector<double>> err(n, std::vector<double>(L));
  std::vector<double> scale(n);
  detail::parallel_for_paths(n, cfg.workers, [&](std::size_t p) {
    const auto finals = detail::ladder_path(cfg, dt_ladder, ratios, p);
    for (std::size_t i = 0; i < L; ++i) err[p][i] = graph_norm(cfg.model.generator, finals[i] - finals.back(), 0);
    scale[p] = graph_norm(cfg.model.generator, finals.back(), 0);
  });
  OrderFit f;
  double sc = 0;
  for (std::size_t i = 0; i < L; ++i) {
    std::vector<double> xs(n);
    for (std::size_t p = 0; p < n; ++p) xs[p] = err[p][i];
    const auto s = detail::stats_of(xs);
    f.dts.push_back(dt_ladder[i]);
    f.errors.push_back(s.mean);
    f.std_errors.push_back(n > 1 ? s.std_error : 0.0);
  }
  for (double x : scale) sc = std::max(sc, x);
  detail::fit_order(f, 1e-12 * std::max(1.0, sc));
  return f;
}

/// Weak error |E f(phi_dt(T)) - E f(phi_ref(T))|. The reference is the
/// finest ladder entry, or `continuum_value` when a closed form is known
/// (then every ladder entry is compared against it).
inline OrderFit weak_order(const EnsembleConfig& cfg, const std::vector<double>& dt_ladder,
                           const std::function<double(const State&)>& f,
                           const std::optional<double>& continuum_value = std::nullopt) {
  const auto ratios = detail::ladder_ratios(dt_ladder, cfg.T);
  const std::size_t n = cfg.covariance.empty() ? 1 : cfg.n_paths;
  const std::size_t L = dt_ladder.size();
  std::vector<std::vector<double>> val(n, std::vector<double>(L));
  detail::parallel_for_paths(n, cfg.workers, [&](std::size_t p) {
    const auto finals = detail::ladder_path(cfg, dt_ladder, ratios, p);
    for (std::size_t i = 0; i < L; ++i) val[p][i] = f(finals[i]);
  });
  OrderFit fit;
  const std::size_t M = continuum_value ? L : L - 1;
  for (std::size_t i = 0; i < M; ++i) {
    std::vector<double> d(n);
    for (std::size_t p = 0; p < n; ++p) d[p] = continuum_value ? val[p][i] - *continuum_value : val[p][i] - val[p][L - 1];
    const auto s = detail::stats_of(d);
    fit.dts.push_back(dt_ladder[i]);
    fit.errors.push_back(std::abs(s.mean));
    fit.std_errors.push_back(n > 1 ? s.std_error : 0.0);
  }
  detail::fit_order(fit, 1e-13);
  return fit;
}

/// E ||phi_n||^2 of exponential Euler for d phi = phi dW on one constant
/// noise mode with eigenvalue lambda: (1 + lambda dt)^{T/dt} ||phi0||^2.
inline double exp_euler_scalar_second_moment(double norm0_sq, double lambda, double dt, double T) {
  return norm0_sq * std::pow(1.0 + lambda * dt, T / dt);
}

// --------------------------------------------------------------------------
// Stopping-time survival
// --------------------------------------------------------------------------

struct TailCurve {
  std::vector<double> rho;
  std::vector<double> survival;   ///< empirical P(tau > rho)
  std::vector<double> std_error;  ///< binomial standard error per point
  double M_hat = 0.0;             ///< least squares fit of 1 - rho^2 M over rho <= 0.5
  double M_std_error = 0.0;
  double M_upper = 0.0;  ///< M_hat + 2 M_std_error
  bool monotone = true;
  bool lower_bound_holds = true;  ///< 1 - rho^2 M_upper <= survival + 3 se on rho <= 0.5
};

/// Survival function of the stopping time on `rho_grid` (all <= T). Paths
/// that never stop count as surviving every rho.
inline TailCurve tail_curve(const EnsembleConfig& cfg, const std::vector<double>& rho_grid) {
  for (double r : rho_grid)
    if (!(r > 0.0) || !(r < 1.0) || r > cfg.T + 1e-12) throw std::invalid_argument("tail_curve: rho must lie in (0, min(1, T)]");
  EnsembleConfig c = cfg;
  c.observables.clear();
  const auto res = run_ensemble(c);
  const double n = double(res.stop_times.size());
  TailCurve tc;
  tc.rho = rho_grid;
  for (double r : rho_grid) {
    double alive = 0;
    for (double t : res.stop_times)
      if (std::isnan(t) || t > r) alive += 1;
    const double s = alive / n;
    tc.survival.push_back(s);
    tc.std_error.push_back(std::sqrt(std::max(s * (1 - s), 0.25 / n) / n));
  }
  for (std::size_t i = 1; i < tc.rho.size(); ++i)
    if (tc.rho[i] > tc.rho[i - 1] && tc.survival[i] > tc.survival[i - 1]) tc.monotone = false;

  double sxy = 0, sxx = 0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < tc.rho.size(); ++i) {
    if (tc.rho[i] > 0.5 + 1e-12) continue;
    const double x = tc.rho[i] * tc.rho[i];
    sxy += x * (1.0 - tc.survival[i]);
    sxx += x * x;
    ++k;
  }
  if (k == 0 || sxx == 0) return tc;
  tc.M_hat = sxy / sxx;
  double rr = 0;
  for (std::size_t i = 0; i < tc.rho.size(); ++i) {
    if (tc.rho[i] > 0.5 + 1e-12) continue;
    const double e = (1.0 - tc.survival[i]) - tc.M_hat * tc.rho[i] * tc.rho[i];
    rr += e * e;
  }
  tc.M_std_error = k > 1 ? std::sqrt(rr / double(k - 1) / sxx) : 0.0;
  tc.M_upper = tc.M_hat + 2.0 * tc.M_std_error;
  for (std::size_t i = 0; i < tc.rho.size(); ++i) {
    if (tc.rho[i] > 0.5 + 1e-12) continue;
    if (1.0 - tc.rho[i] * tc.rho[i] * tc.M_upper > tc.survival[i] + 3.0 * tc.std_error[i]) tc.lower_bound_holds = false;
  }
  return tc;
}

// --------------------------------------------------------------------------
// Monte Carlo vs chaos
// --------------------------------------------------------------------------

struct ChaosMcReport {
  double pairing_mc = 0.0;     ///< Re E<phi(T), v> by Monte Carlo
  double pairing_mc_se = 0.0;
  double pairing_chaos = 0.0;  ///< Re <c_0(T), v>
  double pairing_z = 0.0;      ///< |difference| / stderr
  double max_pointwise_z = 0.0;
  double second_moment_mc = 0.0;
  double second_moment_mc_se = 0.0;
  double second_moment_chaos = 0.0;
  double second_moment_z = 0.0;
  double tail_fraction = 0.0;
  bool mean_within_3se = false;
};

/// Compares the Monte Carlo mean field with the degree-0 chaos block and
/// E||phi(T)||^2 with sum_alpha ||c_alpha(T)||^2. The chaos noise uses the
/// ensemble's covariance with one time function.
inline ChaosMcReport chaos_vs_mc(const EnsembleConfig& cfg, const ChaosSpace& space, const State& probe) {
  EnsembleConfig c = cfg;
  c.observables.clear();
  const auto mc = run_ensemble(c, true);
  const auto wick = solve_wick_evolution(cfg.model, cfg.initial, WickNoise{cfg.covariance, 1}, cfg.T, cfg.dt, space);
  const ChaosState& cs = wick.final_state();

  ChaosMcReport r;
  const std::size_t n = mc.final_states.size();
  std::vector<double> pr(n), m2(n);
  for (std::size_t p = 0; p < n; ++p) {
    pr[p] = state_pairing(mc.final_states[p], probe).real();
    double e = 0;
    for (const auto& f : mc.final_states[p].components) e += f.norm() * f.norm();
    m2[p] = e;
  }
  const auto ps = detail::stats_of(pr), ms = detail::stats_of(m2);
  r.pairing_mc = ps.mean;
  r.pairing_mc_se = ps.std_error;
  r.pairing_chaos = state_pairing(cs.mean(), probe).real();
  r.pairing_z = ps.std_error > 0 ? std::abs(ps.mean - r.pairing_chaos) / ps.std_error
                                 : (std::abs(ps.mean - r.pairing_chaos) < 1e-10 ? 0.0 : std::numeric_limits<double>::infinity());
  r.second_moment_mc = ms.mean;
  r.second_moment_mc_se = ms.std_error;
  r.second_moment_chaos = cs.second_moment();
  r.second_moment_z = ms.std_error > 0 ? std::abs(ms.mean - r.second_moment_chaos) / ms.std_error : 0.0;
  r.tail_fraction = cs.tail_fraction();

  // pointwise z-scores of the mean field, real and imaginary parts
  const State& c0 = cs.mean();
  for (std::size_t comp = 0; comp < c0.count(); ++comp)
    for (std::size_t x = 0; x < c0[comp].size(); ++x) {
      for (int part = 0; part < 2; ++part) {
        std::vector<double> xs(n);
        for (std::size_t p = 0; p < n; ++p) {
          const cplx v = mc.final_states[p][comp].values[x];
          xs[p] = part == 0 ? v.real() : v.imag();
        }
        const auto s = detail::stats_of(xs);
        const cplx ref = c0[comp].values[x];
        const double d = std::abs(s.mean - (part == 0 ? ref.real() : ref.imag()));
        if (s.std_error > 0) r.max_pointwise_z = std::max(r.max_pointwise_z, d / s.std_error);
        else if (d > 1e-10) r.max_pointwise_z = std::numeric_limits<double>::infinity();
      }
    }
  r.mean_within_3se = r.pairing_z <= 3.0;
  return r;
}

}  // namespace wavesde
