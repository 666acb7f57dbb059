#pragma once

/// \file chaos.hpp
/// Truncated Wiener chaos on n Gaussian coordinates xi_1..xi_n.
///
/// A vector Phi = sum_alpha c_alpha H_alpha uses the normalized Hermite basis
/// H_alpha = prod_i He_{alpha_i}(xi_i) / sqrt(alpha_i!), so ||Phi||_0^2 =
/// sum |c_alpha|^2. In this basis
///
///     S Phi(zeta) = sum_alpha c_alpha zeta^alpha / sqrt(alpha!)
///
/// with the bilinear pairing <zeta, eta> = sum zeta_i eta_i. Wick products
/// are therefore products of the polynomials S Phi, truncated at degree M.

#include "grid.hpp"
#include "mild_solver.hpp"
#include "models.hpp"
#include "noise.hpp"
#include "rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavesde {

using MultiIndex = std::vector<int>;

/// Immutable truncated chaos space; copies share the index tables.
class ChaosSpace {
 public:
  ChaosSpace() = default;

  /// Weights default to w_i = i + 1 (i = 1..n), i.e. 2, 3, ...
  ChaosSpace(int n_modes, int max_degree, std::vector<double> weights = {}) {
    if (n_modes < 1) throw std::invalid_argument("chaos space needs at least one mode");
    if (max_degree < 0) throw std::invalid_argument("chaos truncation degree must be >= 0");
    if (weights.empty())
      for (int i = 1; i <= n_modes; ++i) weights.push_back(i + 1.0);
    if (static_cast<int>(weights.size()) != n_modes) throw std::invalid_argument("one weight per chaos mode required");
    for (double w : weights)
      if (!(w > 1.0)) throw std::invalid_argument("chaos mode weights must exceed 1");
    auto impl = std::make_shared<Impl>();
    impl->n = n_modes;
    impl->M = max_degree;
    impl->w = std::move(weights);
    impl->build();
    impl_ = std::move(impl);
  }

  [[nodiscard]] int n_modes() const { return impl().n; }
  [[nodiscard]] int max_degree() const { return impl().M; }
  [[nodiscard]] const std::vector<double>& weights() const { return impl().w; }
  [[nodiscard]] std::size_t size() const { return impl().alphas.size(); }
  [[nodiscard]] const MultiIndex& alpha(std::size_t a) const { return impl().alphas[a]; }
  [[nodiscard]] int degree(std::size_t a) const { return impl().deg[a]; }
  /// sqrt(alpha!)
  [[nodiscard]] double sqrt_factorial(std::size_t a) const { return impl().sqfact[a]; }
  [[nodiscard]] long index_of(const MultiIndex& al) const {
    auto it = impl().index.find(al);
    return it == impl().index.end() ? -1 : static_cast<long>(it->second);
  }
  /// Index of alpha + beta, or -1 beyond the truncation.
  [[nodiscard]] long sum_index(std::size_t a, std::size_t b) const { return impl().sum[a * size() + b]; }
  /// Index of alpha + e_i / alpha - e_i, or -1.
  [[nodiscard]] long raise(std::size_t a, int i) const { return impl().up[a * impl().n + i]; }
  [[nodiscard]] long lower(std::size_t a, int i) const { return impl().down[a * impl().n + i]; }

  friend bool operator==(const ChaosSpace& x, const ChaosSpace& y) {
    if (x.impl_ == y.impl_) return true;
    if (!x.impl_ || !y.impl_) return false;
    return x.impl_->n == y.impl_->n && x.impl_->M == y.impl_->M && x.impl_->w == y.impl_->w;
  }

 private:
  struct Impl {
    int n = 0, M = 0;
    std::vector<double> w;
    std::vector<MultiIndex> alphas;
    std::vector<int> deg;
    std::vector<double> sqfact;
    std::map<MultiIndex, std::size_t> index;
    std::vector<long> sum, up, down;

    void build() {
      MultiIndex cur(n, 0);
      for (int d = 0; d <= M; ++d) enumerate(cur, 0, d);
      for (std::size_t a = 0; a < alphas.size(); ++a) {
        index[alphas[a]] = a;
        double f = 1.0;
        for (int v : alphas[a])
          for (int k = 2; k <= v; ++k) f *= k;
        sqfact.push_back(std::sqrt(f));
      }
      const std::size_t s = alphas.size();
      sum.assign(s * s, -1);
      for (std::size_t a = 0; a < s; ++a)
        for (std::size_t b = 0; b < s; ++b) {
          if (deg[a] + deg[b] > M) continue;
          MultiIndex g(n);
          for (int i = 0; i < n; ++i) g[i] = alphas[a][i] + alphas[b][i];
          sum[a * s + b] = static_cast<long>(index.at(g));
        }
      up.assign(s * n, -1);
      down.assign(s * n, -1);
      for (std::size_t a = 0; a < s; ++a)
        for (int i = 0; i < n; ++i) {
          MultiIndex g = alphas[a];
          ++g[i];
          if (auto it = index.find(g); it != index.end()) up[a * n + i] = static_cast<long>(it->second);
          g[i] -= 2;
          if (g[i] >= 0) down[a * n + i] = static_cast<long>(index.at(g));
        }
    }

    // all multi-indices of total degree d, lexicographically descending
    void enumerate(MultiIndex& cur, int pos, int remaining) {
      if (pos == n - 1) {
        cur[pos] = remaining;
        alphas.push_back(cur);
        int d = 0;
        for (int v : cur) d += v;
        deg.push_back(d);
        return;
      }
      for (int v = remaining; v >= 0; --v) {
        cur[pos] = v;
        enumerate(cur, pos + 1, remaining - v);
      }
      cur[pos] = 0;
    }
  };

  const Impl& impl() const {
    if (!impl_) throw std::logic_error("use of an empty ChaosSpace");
    return *impl_;
  }

  std::shared_ptr<const Impl> impl_;
};

/// C(n + M, M)
inline std::size_t chaos_dimension(int n_modes, int max_degree) {
  double r = 1.0;
  for (int k = 1; k <= max_degree; ++k) r = r * (n_modes + k) / k;
  return static_cast<std::size_t>(std::llround(r));
}

struct ChaosVector {
  ChaosSpace space;
  Eigen::VectorXcd c;
  bool truncated = false;  ///< a product or creation dropped mass beyond degree M

  ChaosVector() = default;
  explicit ChaosVector(ChaosSpace s) : space(std::move(s)), c(Eigen::VectorXcd::Zero(space.size())) {}
  ChaosVector(ChaosSpace s, Eigen::VectorXcd coeffs) : space(std::move(s)), c(std::move(coeffs)) {
    if (static_cast<std::size_t>(c.size()) != space.size()) throw std::invalid_argument("coefficient count does not match chaos space");
  }

  [[nodiscard]] double norm0() const { return c.norm(); }
  [[nodiscard]] int degree() const {
    int d = 0;
    for (std::size_t a = 0; a < space.size(); ++a)
      if (c[a] != cplx{}) d = std::max(d, space.degree(a));
    return d;
  }
};

inline ChaosVector operator+(const ChaosVector& a, const ChaosVector& b) { return {a.space, a.c + b.c}; }
inline ChaosVector operator-(const ChaosVector& a, const ChaosVector& b) { return {a.space, a.c - b.c}; }
inline ChaosVector operator*(cplx s, const ChaosVector& a) { return {a.space, s * a.c}; }

inline ChaosVector vacuum(const ChaosSpace& s) {
  ChaosVector v(s);
  v.c[0] = 1.0;
  return v;
}

/// sum_i y_i xi_i
inline ChaosVector first_chaos(const ChaosSpace& s, const CVec& y) {
  ChaosVector v(s);
  for (int i = 0; i < s.n_modes(); ++i) {
    MultiIndex e(s.n_modes(), 0);
    e[i] = 1;
    if (s.max_degree() >= 1) v.c[s.index_of(e)] = y.at(i);
  }
  return v;
}

namespace detail {

inline void check_test_vector(const ChaosSpace& s, const CVec& z) {
  if (static_cast<int>(z.size()) != s.n_modes())
    throw std::invalid_argument("test vector has " + std::to_string(z.size()) + " coordinates, chaos space has " +
                                std::to_string(s.n_modes()) + " modes");
}

inline cplx monomial(const MultiIndex& al, const CVec& z) {
  cplx r = 1.0;
  for (std::size_t i = 0; i < al.size(); ++i)
    for (int k = 0; k < al[i]; ++k) r *= z[i];
  return r;
}

/// zeta^alpha / sqrt(alpha!) for every alpha
inline Eigen::VectorXcd exp_coefficients(const ChaosSpace& s, const CVec& z) {
  check_test_vector(s, z);
  Eigen::VectorXcd out(s.size());
  for (std::size_t a = 0; a < s.size(); ++a) out[a] = monomial(s.alpha(a), z) / s.sqrt_factorial(a);
  return out;
}

/// Wick product on raw coefficient vectors; sets `dropped` when mass
/// beyond degree M was discarded.
inline Eigen::VectorXcd wick_mul(const ChaosSpace& s, const Eigen::VectorXcd& x, const Eigen::VectorXcd& y, bool* dropped = nullptr) {
  const std::size_t n = s.size();
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n);
  for (std::size_t a = 0; a < n; ++a) {
    if (x[a] == cplx{}) continue;
    const cplx xa = x[a] / s.sqrt_factorial(a);
    for (std::size_t b = 0; b < n; ++b) {
      if (y[b] == cplx{}) continue;
      const long g = s.sum_index(a, b);
      if (g < 0) {
        if (dropped) *dropped = true;
        continue;
      }
      out[g] += xa * y[b] / s.sqrt_factorial(b) * s.sqrt_factorial(g);
    }
  }
  return out;
}

inline Eigen::VectorXcd wick_pow(const ChaosSpace& s, const Eigen::VectorXcd& x, int k, bool* dropped = nullptr) {
  Eigen::VectorXcd r = Eigen::VectorXcd::Zero(s.size());
  r[0] = 1.0;
  for (int i = 0; i < k; ++i) r = wick_mul(s, r, x, dropped);
  return r;
}

/// sum_{n<=M} f^{(n)}(u0)/n! (x - u0)^{:n} with u0 the degree-0 coefficient;
/// `derivative(n, u0)` returns f^{(n)}(u0).
inline Eigen::VectorXcd wick_analytic(const ChaosSpace& s, const Eigen::VectorXcd& x,
                                      const std::function<cplx(int, cplx)>& derivative) {
  const cplx u0 = x[0];
  Eigen::VectorXcd fluct = x;
  fluct[0] = 0.0;
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(s.size());
  Eigen::VectorXcd power = Eigen::VectorXcd::Zero(s.size());
  power[0] = 1.0;
  double fact = 1.0;
  for (int n = 0; n <= s.max_degree(); ++n) {
    if (n > 0) {
      power = wick_mul(s, power, fluct);
      fact *= n;
    }
    out += derivative(n, u0) / fact * power;
  }
  return out;
}

}  // namespace detail

/// Coefficients zeta^alpha / sqrt(alpha!) of the exponential vector.
inline ChaosVector exp_vector(const ChaosSpace& s, const CVec& zeta) { return {s, detail::exp_coefficients(s, zeta)}; }

/// S Phi(zeta) = sum_alpha c_alpha zeta^alpha / sqrt(alpha!)
inline cplx s_transform(const ChaosVector& phi, const CVec& zeta) {
  return phi.c.transpose() * detail::exp_coefficients(phi.space, zeta);
}

inline ChaosVector wick_product(const ChaosVector& a, const ChaosVector& b) {
  if (!(a.space == b.space)) throw std::invalid_argument("wick_product: different chaos spaces");
  ChaosVector out(a.space);
  bool dropped = false;
  out.c = detail::wick_mul(a.space, a.c, b.c, &dropped);
  out.truncated = dropped || a.truncated || b.truncated;
  return out;
}

inline ChaosVector wick_power(const ChaosVector& a, int k) {
  ChaosVector out(a.space);
  bool dropped = false;
  out.c = detail::wick_pow(a.space, a.c, k, &dropped);
  out.truncated = dropped;
  return out;
}

/// Coefficientwise conjugate: S(conj Phi)(zeta) = conj(S Phi(conj zeta)).
inline ChaosVector conj_coefficients(const ChaosVector& a) { return {a.space, a.c.conjugate()}; }

/// Wick sine, the Taylor series of sin around the degree-0 value.
inline ChaosVector wick_sin(const ChaosVector& a) {
  auto d = [](int n, cplx u) {
    switch (n % 4) {
      case 0: return std::sin(u);
      case 1: return std::cos(u);
      case 2: return -std::sin(u);
      default: return -std::cos(u);
    }
  };
  return {a.space, detail::wick_analytic(a.space, a.c, d)};
}

// --------------------------------------------------------------------------
// Fock operators
// --------------------------------------------------------------------------

struct FockOperator {
  ChaosSpace space;
  Eigen::MatrixXcd matrix;

  [[nodiscard]] ChaosVector operator()(const ChaosVector& v) const { return {space, matrix * v.c}; }
};

inline FockOperator operator*(const FockOperator& a, const FockOperator& b) { return {a.space, a.matrix * b.matrix}; }
inline FockOperator operator+(const FockOperator& a, const FockOperator& b) { return {a.space, a.matrix + b.matrix}; }
inline FockOperator operator-(const FockOperator& a, const FockOperator& b) { return {a.space, a.matrix - b.matrix}; }

inline FockOperator identity_operator(const ChaosSpace& s) {
  return {s, Eigen::MatrixXcd::Identity(s.size(), s.size())};
}

/// (a_y c)_alpha = sum_i y_i sqrt(alpha_i + 1) c_{alpha + e_i}
inline FockOperator annihilation_operator(const ChaosSpace& s, const CVec& y) {
  detail::check_test_vector(s, y);
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(s.size(), s.size());
  for (std::size_t a = 0; a < s.size(); ++a)
    for (int i = 0; i < s.n_modes(); ++i)
      if (long b = s.raise(a, i); b >= 0) m(a, b) += y[i] * std::sqrt(double(s.alpha(a)[i] + 1));
  return {s, m};
}

/// (a+_z c)_alpha = sum_i z_i sqrt(alpha_i) c_{alpha - e_i}; the top degree
/// is dropped.
inline FockOperator creation_operator(const ChaosSpace& s, const CVec& z) {
  detail::check_test_vector(s, z);
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(s.size(), s.size());
  for (std::size_t a = 0; a < s.size(); ++a)
    for (int i = 0; i < s.n_modes(); ++i)
      if (long b = s.lower(a, i); b >= 0) m(a, b) += z[i] * std::sqrt(double(s.alpha(a)[i]));
  return {s, m};
}

inline ChaosVector annihilate(const ChaosVector& v, const CVec& y) { return annihilation_operator(v.space, y)(v); }

inline ChaosVector create(const ChaosVector& v, const CVec& z) {
  ChaosVector out = creation_operator(v.space, z)(v);
  for (std::size_t a = 0; a < v.space.size(); ++a)
    if (v.space.degree(a) == v.space.max_degree() && v.c[a] != cplx{}) {
      for (int i = 0; i < v.space.n_modes(); ++i)
        if (z[i] != cplx{}) out.truncated = true;
    }
  out.truncated = out.truncated || v.truncated;
  return out;
}

/// Gamma(T): S(Gamma(T) Phi)(zeta) = S Phi(T^t zeta), so that
/// Gamma(T) exp_vector(zeta) = exp_vector(T zeta). Acts as T^{(x)k} on
/// the degree-k block.
inline FockOperator second_quantization(const ChaosSpace& s, const Eigen::MatrixXcd& T) {
  const int n = s.n_modes();
  if (T.rows() != n || T.cols() != n) throw std::invalid_argument("second_quantization: mode map must be n x n");
  const std::size_t dim = s.size();
  // linear forms L_i(zeta) = (T^t zeta)_i = sum_j T_{ji} zeta_j as polynomial
  // coefficient vectors (monomial basis a_alpha = c_alpha / sqrt(alpha!))
  std::vector<Eigen::VectorXcd> lin(n, Eigen::VectorXcd::Zero(dim));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      MultiIndex e(n, 0);
      e[j] = 1;
      if (s.max_degree() >= 1) lin[i][s.index_of(e)] = T(j, i);
    }
  auto poly_mul = [&](const Eigen::VectorXcd& x, const Eigen::VectorXcd& y) {
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(dim);
    for (std::size_t a = 0; a < dim; ++a) {
      if (x[a] == cplx{}) continue;
      for (std::size_t b = 0; b < dim; ++b) {
        if (y[b] == cplx{}) continue;
        if (long g = s.sum_index(a, b); g >= 0) out[g] += x[a] * y[b];
      }
    }
    return out;
  };
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  for (std::size_t b = 0; b < dim; ++b) {
    Eigen::VectorXcd p = Eigen::VectorXcd::Zero(dim);
    p[0] = 1.0;
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < s.alpha(b)[i]; ++k) p = poly_mul(p, lin[i]);
    // basis vector c_b = sqrt(b!) in monomial coordinates, image back to c
    for (std::size_t a = 0; a < dim; ++a) m(a, b) = p[a] * s.sqrt_factorial(a) / s.sqrt_factorial(b);
  }
  return {s, m};
}

inline ChaosVector second_quantization(const ChaosSpace& s, const Eigen::MatrixXcd& T, const ChaosVector& v) {
  return second_quantization(s, T)(v);
}

/// <<Xi phi_zeta, phi_eta>> = S(Xi phi_zeta)(eta)
inline cplx operator_symbol(const FockOperator& xi, const CVec& zeta, const CVec& eta) {
  return s_transform(xi(exp_vector(xi.space, zeta)), eta);
}

// --------------------------------------------------------------------------
// Norms and growth
// --------------------------------------------------------------------------

/// |zeta|_p = (sum_i w_i^{2p} |zeta_i|^2)^{1/2}
inline double test_norm(const ChaosSpace& s, const CVec& zeta, int p) {
  detail::check_test_vector(s, zeta);
  double acc = 0.0;
  for (int i = 0; i < s.n_modes(); ++i) acc += std::pow(s.weights()[i], 2.0 * p) * std::norm(zeta[i]);
  return std::sqrt(acc);
}

/// ||Phi||_{p,beta}^2 = sum_alpha (n!)^{beta} w^{2p alpha} |c_alpha|^2 for
/// p >= 0 and the dual form with (n!)^{-beta} for p < 0, n = |alpha|.
inline double norm_beta(const ChaosVector& v, int p, double beta) {
  if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("norm_beta: beta must lie in [0, 1]");
  const auto& s = v.space;
  double acc = 0.0;
  for (std::size_t a = 0; a < s.size(); ++a) {
    double nf = 1.0;
    for (int k = 2; k <= s.degree(a); ++k) nf *= k;
    double wp = 1.0;
    for (int i = 0; i < s.n_modes(); ++i) wp *= std::pow(s.weights()[i], 2.0 * p * s.alpha(a)[i]);
    acc += std::pow(nf, p >= 0 ? beta : -beta) * wp * std::norm(v.c[a]);
  }
  return std::sqrt(acc);
}

struct GrowthFit {
  double C = 0.0;
  double K = 0.0;
  double slope = 0.0;  ///< raw least-squares slope of log|F| against |zeta|_p^2
  std::size_t samples = 0;
  double cr_residual = 0.0;  ///< Cauchy-Riemann residual of z -> F(z zeta + eta)
  bool conforming = false;
};

/// Samples F on rays zeta = r * u (|u|_p = 1) for every radius, fits
/// log|F| ~ log C + K |zeta|_p^2 by least squares, clamps K >= 0, then raises
/// C until the envelope covers every sample. Also checks holomorphy of
/// z -> F(z zeta + eta) with a fourth-order stencil.
inline GrowthFit growth_bound_fit(const std::function<cplx(const CVec&)>& F, const ChaosSpace& s, int p,
                                  const std::vector<double>& radii, std::size_t directions = 8, std::uint64_t seed = 11) {
  if (radii.empty()) throw std::invalid_argument("growth_bound_fit: no radii");
  NormalStream rng(seed, 0x9a0);
  const int n = s.n_modes();
  auto random_unit = [&] {
    CVec u(n);
    for (auto& x : u) x = cplx(rng.normal(), rng.normal());
    const double nu = test_norm(s, u, p);
    for (auto& x : u) x /= nu;
    return u;
  };
  std::vector<double> xs, ys;
  for (std::size_t d = 0; d < directions; ++d) {
    const CVec u = random_unit();
    for (double r : radii) {
      CVec z(n);
      for (int i = 0; i < n; ++i) z[i] = r * u[i];
      const double a = std::abs(F(z));
      if (!std::isfinite(a)) return {};
      if (a == 0.0) continue;
      xs.push_back(r * r);
      ys.push_back(std::log(a));
    }
  }
  GrowthFit fit;
  fit.samples = xs.size();
  if (xs.size() >= 2) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= xs.size();
    my /= xs.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    fit.slope = sxx > 0 ? sxy / sxx : 0.0;
  }
  fit.K = std::max(0.0, fit.slope);
  double logC = xs.empty() ? 0.0 : -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < xs.size(); ++i) logC = std::max(logC, ys[i] - fit.K * xs[i]);
  fit.C = std::exp(logC);

  const CVec zeta = random_unit(), eta = random_unit();
  const double h = 1e-3;
  const cplx I(0.0, 1.0);
  auto g = [&](cplx z) {
    CVec w(n);
    for (int i = 0; i < n; ++i) w[i] = z * zeta[i] + eta[i];
    return F(w);
  };
  auto d = [&](cplx dir) { return (g(-2.0 * h * dir) - 8.0 * g(-h * dir) + 8.0 * g(h * dir) - g(2.0 * h * dir)) / (12.0 * h); };
  fit.cr_residual = std::abs(d(I) - I * d(1.0));
  fit.conforming = std::isfinite(fit.C) && std::isfinite(fit.K) && fit.cr_residual < 1e-6;
  return fit;
}

// --------------------------------------------------------------------------
// Chaos-valued fields and the Wick evolution
// --------------------------------------------------------------------------

/// One model State per multi-index: blocks[a] holds the coefficient
/// fields c_alpha(x) of every component.
struct ChaosState {
  ChaosSpace space;
  std::vector<State> blocks;

  [[nodiscard]] const State& mean() const { return blocks.front(); }

  /// sum_alpha ||c_alpha||^2 (plain L^2 over components), the second moment
  /// E ||phi||^2.
  [[nodiscard]] double second_moment() const {
    double acc = 0.0;
    for (const auto& b : blocks)
      for (const auto& c : b.components) acc += c.norm() * c.norm();
    return acc;
  }

  /// Fraction of the second moment carried by degree M.
  [[nodiscard]] double tail_fraction() const {
    double top = 0.0, all = 0.0;
    for (std::size_t a = 0; a < blocks.size(); ++a) {
      double e = 0.0;
      for (const auto& c : blocks[a].components) e += c.norm() * c.norm();
      all += e;
      if (space.degree(a) == space.max_degree()) top += e;
    }
    return all > 0.0 ? top / all : 0.0;
  }
};

inline ChaosState deterministic_chaos_state(const ChaosSpace& s, const State& phi) {
  ChaosState cs{s, std::vector<State>(s.size(), phi.zeros_like())};
  cs.blocks[0] = phi;
  return cs;
}

/// sum_alpha c_alpha(x) zeta^alpha / sqrt(alpha!)
inline State s_transform(const ChaosState& cs, const CVec& zeta) {
  const auto w = detail::exp_coefficients(cs.space, zeta);
  State out = cs.blocks[0].zeros_like();
  for (std::size_t a = 0; a < cs.blocks.size(); ++a) axpy(w[a], cs.blocks[a], out);
  return out;
}

namespace detail {

/// Gathers component c at grid point x into a coefficient vector.
inline Eigen::VectorXcd gather(const ChaosState& cs, std::size_t comp, std::size_t x) {
  Eigen::VectorXcd v(cs.blocks.size());
  for (std::size_t a = 0; a < cs.blocks.size(); ++a) v[a] = cs.blocks[a][comp].values[x];
  return v;
}

inline void scatter(ChaosState& cs, std::size_t comp, std::size_t x, const Eigen::VectorXcd& v) {
  for (std::size_t a = 0; a < cs.blocks.size(); ++a) cs.blocks[a][comp].values[x] = v[a];
}

}  // namespace detail

/// Wick-quantized interaction term :J(phi):, defined gridpoint by gridpoint
/// so that S(:J(phi):)(zeta) = J(S phi(zeta)) for real zeta (conjugates are
/// taken coefficientwise). Returns :J: itself, without j_factors.
inline ChaosState wick_J(const Model& model, const ChaosState& cs) {
  ChaosState out{cs.space, std::vector<State>(cs.blocks.size(), cs.blocks[0].zeros_like())};
  if (model.linear) return out;
  const auto& s = cs.space;
  const std::size_t npts = model.grid.size();
  const auto& P = model.params;
  using detail::gather;
  using detail::scatter;
  using detail::wick_mul;
  using detail::wick_pow;
  switch (model.kind) {
    case ModelKind::nls:
    case ModelKind::klein_gordon: {
      const std::size_t target = model.kind == ModelKind::nls ? 0 : 1;
      for (std::size_t x = 0; x < npts; ++x) {
        const auto psi = gather(cs, 0, x);
        const Eigen::VectorXcd v = double(P.sign) * wick_mul(s, wick_pow(s, psi, (P.p + 1) / 2), wick_pow(s, psi.conjugate(), (P.p - 1) / 2));
        scatter(out, target, x, v);
      }
      break;
    }
    case ModelKind::sine_gordon:
      for (std::size_t x = 0; x < npts; ++x) {
        ChaosVector u(s, gather(cs, 0, x));
        scatter(out, 1, x, P.g * wick_sin(u).c);
      }
      break;
    case ModelKind::zakharov: {
      std::vector<State> dens(cs.blocks.size(), cs.blocks[0].zeros_like());
      ChaosState d{s, dens};
      for (std::size_t x = 0; x < npts; ++x) {
        const auto psi = gather(cs, 0, x);
        const auto v = gather(cs, 1, x);
        const Eigen::VectorXcd re_v = 0.5 * (v + v.conjugate());
        scatter(out, 0, x, -wick_mul(s, psi, re_v));
        scatter(d, 0, x, wick_mul(s, psi, psi.conjugate()));
      }
      for (std::size_t a = 0; a < cs.blocks.size(); ++a) out.blocks[a][1] = detail::apply_scalar_op(model.abs_grad, d.blocks[a][0]);
      break;
    }
    case ModelKind::maxwell_dirac: {
      const double k2 = P.k0 * P.k0;
      for (std::size_t x = 0; x < npts; ++x) {
        const auto p1 = gather(cs, 0, x), p2 = gather(cs, 1, x);
        const auto a0 = gather(cs, 2, x), a1 = gather(cs, 4, x);
        scatter(out, 0, x, wick_mul(s, a0, p1) + wick_mul(s, a1, p2));
        scatter(out, 1, x, wick_mul(s, a0, p2) + wick_mul(s, a1, p1));
        const Eigen::VectorXcd rho = wick_mul(s, p1, p1.conjugate()) + wick_mul(s, p2, p2.conjugate());
        const Eigen::VectorXcd cur = wick_mul(s, p1.conjugate(), p2) + wick_mul(s, p2.conjugate(), p1);
        scatter(out, 3, x, rho + k2 * a0);
        scatter(out, 5, x, -cur + k2 * a1);
      }
      break;
    }
  }
  return out;
}

/// First-chaos noise potential Z(s) = sum_{i,k} sqrt(lambda_i) e_i m_k(s) xi_{ik}
/// with the cosine time basis m_0 = 1/sqrt(T), m_k = sqrt(2/T) cos(k pi s/T).
/// Chaos mode (i, k) has index i * time_functions + k.
struct WickNoise {
  CovarianceSpec covariance;
  int time_functions = 1;

  [[nodiscard]] std::size_t modes() const { return covariance.size() * static_cast<std::size_t>(time_functions); }

  [[nodiscard]] static double time_basis(int k, double s, double T) {
    if (k == 0) return 1.0 / std::sqrt(T);
    return std::sqrt(2.0 / T) * std::cos(k * std::numbers::pi * s / T);
  }
};

/// The Theta potential whose S-transform pairing matches a static
/// (time_functions = 1) WickNoise over [0, T].
inline ThetaPotential theta_for_wick_noise(const WickNoise& noise, double T) {
  if (noise.time_functions != 1) throw std::invalid_argument("a static Theta needs a single time function");
  return theta_from_covariance(noise.covariance, 1.0 / std::sqrt(T));
}

struct WickTrajectory {
  std::vector<double> times;
  std::vector<ChaosState> states;
  std::vector<double> tail_fraction;
  bool truncation_overflow = false;

  [[nodiscard]] const ChaosState& final_state() const { return states.back(); }
};

struct WickOptions {
  std::size_t record_every = 0;  ///< 0 keeps only the endpoints
  double overflow_threshold = 1e-2;
};

/// Exponential Euler on the chaos-coefficient system
///   c <- U(dt) (c + dt (F(c) + sum_m z_m(s) a+_m c)),
/// with F = j_factors :J(c): (dealiased for polynomial models). Wick
/// multiplication by the first-chaos Z is the creation operator, so the
/// system is lower-triangular in degree.
inline WickTrajectory solve_wick_evolution(const Model& model, const State& phi0, const WickNoise& noise, double T,
                                           double dt, const ChaosSpace& space, const WickOptions& opt = {}) {
  const std::size_t steps = detail::step_count(T, dt);
  const bool coupled = !noise.covariance.empty();
  if (coupled && static_cast<std::size_t>(space.n_modes()) != noise.modes())
    throw std::invalid_argument("chaos space has " + std::to_string(space.n_modes()) + " modes, noise coupling needs " +
                                std::to_string(noise.modes()));
  const auto& A = model.generator;
  const int n = space.n_modes();
  ChaosState cs = deterministic_chaos_state(space, phi0);
  WickTrajectory tr;
  auto rec = [&](double t) {
    tr.times.push_back(t);
    tr.states.push_back(cs);
    const double f = cs.tail_fraction();
    tr.tail_fraction.push_back(f);
    if (f > opt.overflow_threshold) tr.truncation_overflow = true;
  };
  rec(0.0);
  for (std::size_t k = 0; k < steps; ++k) {
    const double s = dt * double(k);
    ChaosState J = wick_J(model, cs);
    ChaosState next = cs;
    for (std::size_t a = 0; a < space.size(); ++a) {
      State f = J.blocks[a];
      for (std::size_t c = 0; c < f.count(); ++c) f[c] *= model.j_factors[c];
      if (model.polynomial() && !model.linear) f = dealias(f);
      axpy(dt, f, next.blocks[a]);
    }
    if (coupled) {
      std::vector<Field> z(n);
      for (std::size_t i = 0; i < noise.covariance.size(); ++i)
        for (int q = 0; q < noise.time_functions; ++q) {
          Field f = noise.covariance.eigenfields[i];
          f *= std::sqrt(noise.covariance.eigenvalues[i]) * WickNoise::time_basis(q, s, T);
          z[i * noise.time_functions + q] = std::move(f);
        }
      for (std::size_t a = 0; a < space.size(); ++a)
        for (int m = 0; m < n; ++m) {
          const long b = space.lower(a, m);
          if (b < 0) continue;
          const double w = dt * std::sqrt(double(space.alpha(a)[m]));
          for (std::size_t c = 0; c < cs.blocks[b].count(); ++c) {
            auto& dst = next.blocks[a][c].values;
            const auto& src = cs.blocks[b][c].values;
            for (std::size_t x = 0; x < dst.size(); ++x) dst[x] += w * z[m].values[x] * src[x];
          }
        }
    }
    for (auto& b : next.blocks) b = propagate(A, dt, b);
    cs = std::move(next);
    for (const auto& b : cs.blocks)
      if (!b.all_finite()) throw std::runtime_error("solve_wick_evolution: non-finite coefficients");
    if ((opt.record_every != 0 && (k + 1) % opt.record_every == 0) || k + 1 == steps) rec(dt * double(k + 1));
  }
  return tr;
}

}  // namespace wavesde
