#pragma once

/// \file models.hpp
/// The five wave models written in the common form
///
///     d/dt phi = -i A phi + F(phi),   F = diag(j_factors) J(phi),
///
/// where J is the model's interaction term exactly as it appears in the
/// model's own equation and j_factors absorbs the factors of i and signs
/// needed to put it into the form above:
///
///   nls            A = -Laplacian,          F = i * sign |psi|^{p-1} psi
///   klein_gordon   A = i[[0,I],[-B^2,0]],   F = (0, -sign |psi|^{p-1} psi)
///   sine_gordon    A = i[[0,I],[-B^2,0]],   F = (0, g sin u)
///   zakharov       A = diag(-Lap, -|grad|), F = i(-psi Re v, |grad| |psi|^2)
///   maxwell_dirac  A = Dirac + two wave blocks acting on (a0, a0_t), (a1, a1_t),
///                  F = (i(a0 + a1 sigma_1) psi, 0, rho + k0^2 a0, 0, -j + k0^2 a1)
///
/// with B = sqrt(-Laplacian + k0^2), rho = |psi|^2, j = <sigma_1 psi, psi>.
/// The +k0^2 a terms undo the mass shift built into B so that the
/// potentials obey the massless wave equation.

#include "grid.hpp"
#include "rng.hpp"
#include "spectral_operator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wavesde {

enum class ModelKind { nls, klein_gordon, zakharov, maxwell_dirac, sine_gordon };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::nls: return "nls";
    case ModelKind::klein_gordon: return "klein_gordon";
    case ModelKind::zakharov: return "zakharov";
    case ModelKind::maxwell_dirac: return "maxwell_dirac";
    case ModelKind::sine_gordon: return "sine_gordon";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view name) {
  if (name == "nls") return ModelKind::nls;
  if (name == "klein_gordon") return ModelKind::klein_gordon;
  if (name == "zakharov") return ModelKind::zakharov;
  if (name == "maxwell_dirac") return ModelKind::maxwell_dirac;
  if (name == "sine_gordon") return ModelKind::sine_gordon;
  throw std::invalid_argument("unknown model: " + std::string(name));
}

struct ModelParams {
  int p = 3;         ///< odd power of |psi|^{p-1} psi
  int sign = 1;      ///< +1 focusing (nls) / repulsive (klein_gordon)
  double g = 1.0;    ///< sine-Gordon coupling
  double k0 = 1.0;   ///< mass shift of B
  double m = 1.0;    ///< Dirac mass
  int N = 1;         ///< smoothness order: graph norms up to ||A^N phi||
};

struct Model {
  ModelKind kind{};
  Grid grid;
  SpectralOperator generator;
  SpectralOperator abs_grad;  ///< |grad| for the Zakharov coupling
  std::vector<std::string> roles;
  std::vector<cplx> j_factors;
  ModelParams params;
  std::vector<Field> potential_modes;
  /// Disables the interaction term (J = 0) while keeping the structure.
  bool linear = false;
  /// Deliberately broken J (multiplied by exp(||phi||^2)) used to exercise
  /// the verifier's failure path.
  bool scale_J_by_norm = false;

  [[nodiscard]] std::size_t components() const { return roles.size(); }
  [[nodiscard]] bool polynomial() const { return kind != ModelKind::sine_gordon; }
  [[nodiscard]] State zero_state() const { return State(grid, roles); }
};

inline Model build_model(ModelKind kind, const Grid& grid, const ModelParams& params) {
  if (params.N < 1) throw std::invalid_argument("smoothness order N must be >= 1");
  if (params.sign != 1 && params.sign != -1) throw std::invalid_argument("sign must be +1 or -1");
  Model m;
  m.kind = kind;
  m.grid = grid;
  m.params = params;
  m.abs_grad = make_operator("abs_grad", grid);
  const cplx I(0.0, 1.0);
  switch (kind) {
    case ModelKind::nls:
      if (params.p < 2 || params.p % 2 == 0) throw std::invalid_argument("nls needs an odd power p >= 3");
      m.generator = make_operator("neg_laplacian", grid);
      m.roles = {"psi"};
      m.j_factors = {I};
      break;
    case ModelKind::klein_gordon:
      if (params.p < 2 || params.p % 2 == 0) throw std::invalid_argument("klein_gordon needs an odd power p >= 3");
      m.generator = make_operator("wave_block", grid, {.k0 = params.k0, .m = std::nullopt});
      m.roles = {"psi", "v"};
      m.j_factors = {1.0, -1.0};
      break;
    case ModelKind::sine_gordon:
      m.generator = make_operator("wave_block", grid, {.k0 = params.k0, .m = std::nullopt});
      m.roles = {"u", "v"};
      m.j_factors = {1.0, 1.0};
      break;
    case ModelKind::zakharov:
      m.generator = make_operator("zakharov_block", grid);
      m.roles = {"psi", "v"};
      m.j_factors = {I, I};
      break;
    case ModelKind::maxwell_dirac:
      if (grid.dim() != 1) throw std::invalid_argument("maxwell_dirac is implemented on 1-D grids only");
      m.generator = make_operator("maxwell_dirac_block", grid, {.k0 = params.k0, .m = params.m});
      m.roles = {"psi1", "psi2", "a0", "a0_t", "a1", "a1_t"};
      m.j_factors = {I, I, 1.0, 1.0, 1.0, 1.0};
      break;
  }
  if (!m.generator.hermitian()) throw std::logic_error("model generator is not Hermitian");
  return m;
}

inline Model build_model(std::string_view name, const Grid& grid, const ModelParams& params) {
  return build_model(parse_model_kind(name), grid, params);
}

namespace detail {

inline void check_model_state(const Model& m, const State& s) {
  if (s.count() != m.components())
    throw std::invalid_argument("state has " + std::to_string(s.count()) + " components, model " +
                                to_string(m.kind) + " expects " + std::to_string(m.components()));
  for (const auto& c : s.components)
    if (!(c.grid == m.grid)) throw std::invalid_argument("state grid does not match model grid");
}

inline cplx power_term(cplx z, int p) {
  const double a = std::abs(z);
  return std::pow(a, p - 1) * z;
}

inline Field apply_scalar_op(const SpectralOperator& op, const Field& f) {
  auto c = f.spectral();
  const auto& b = op.blocks().front();
  for (std::size_t k = 0; k < c.size(); ++k) c[k] *= b.symbol[k];
  return Field::from_spectral(f.grid, c);
}

}  // namespace detail

/// The model's interaction term J(phi), as written in its own equation.
inline State apply_J(const Model& model, const State& state) {
  detail::check_model_state(model, state);
  State out = state.zeros_like();
  if (model.linear) return out;
  const std::size_t n = model.grid.size();
  const auto& P = model.params;
  switch (model.kind) {
    case ModelKind::nls:
      for (std::size_t i = 0; i < n; ++i) out[0].values[i] = double(P.sign) * detail::power_term(state[0].values[i], P.p);
      break;
    case ModelKind::klein_gordon:
      for (std::size_t i = 0; i < n; ++i) out[1].values[i] = double(P.sign) * detail::power_term(state[0].values[i], P.p);
      break;
    case ModelKind::sine_gordon:
      for (std::size_t i = 0; i < n; ++i) out[1].values[i] = P.g * std::sin(state[0].values[i]);
      break;
    case ModelKind::zakharov: {
      Field dens(model.grid);
      for (std::size_t i = 0; i < n; ++i) {
        out[0].values[i] = -state[0].values[i] * state[1].values[i].real();
        dens.values[i] = std::norm(state[0].values[i]);
      }
      out[1] = detail::apply_scalar_op(model.abs_grad, dens);
      break;
    }
    case ModelKind::maxwell_dirac:
      for (std::size_t i = 0; i < n; ++i) {
        const cplx p1 = state[0].values[i], p2 = state[1].values[i];
        const cplx a0 = state[2].values[i], a1 = state[4].values[i];
        out[0].values[i] = a0 * p1 + a1 * p2;
        out[1].values[i] = a0 * p2 + a1 * p1;
        const double rho = std::norm(p1) + std::norm(p2);
        const double cur = 2.0 * (std::conj(p1) * p2).real();
        out[3].values[i] = rho + P.k0 * P.k0 * a0;
        out[5].values[i] = -cur + P.k0 * P.k0 * a1;
      }
      break;
  }
  if (model.scale_J_by_norm) {
    const double n = graph_norm(model.generator, state, 0);
    out *= std::exp(n * n);
  }
  return out;
}

/// F(phi) = diag(j_factors) J(phi), optionally 2/3-dealiased for the
/// polynomial models.
inline State nonlinear_rhs(const Model& model, const State& state, bool dealias_output = true) {
  State out = apply_J(model, state);
  for (std::size_t c = 0; c < out.count(); ++c) out[c] *= model.j_factors[c];
  if (dealias_output && model.polynomial() && !model.linear) out = dealias(out);
  return out;
}

/// Exact solution of d/dt phi = F(phi) over time tau (the interaction
/// half of a split step). Every model's interaction flow is solvable in
/// closed form because it leaves the quantities it depends on invariant.
inline State nonlinear_flow(const Model& model, const State& state, double tau) {
  detail::check_model_state(model, state);
  State out = state;
  if (model.linear) return out;
  const std::size_t n = model.grid.size();
  const auto& P = model.params;
  const cplx I(0.0, 1.0);
  switch (model.kind) {
    case ModelKind::nls:
      for (std::size_t i = 0; i < n; ++i) {
        const double a = std::abs(state[0].values[i]);
        out[0].values[i] *= std::polar(1.0, P.sign * std::pow(a, P.p - 1) * tau);
      }
      break;
    case ModelKind::klein_gordon:
      for (std::size_t i = 0; i < n; ++i)
        out[1].values[i] -= tau * double(P.sign) * detail::power_term(state[0].values[i], P.p);
      break;
    case ModelKind::sine_gordon:
      for (std::size_t i = 0; i < n; ++i) out[1].values[i] += tau * P.g * std::sin(state[0].values[i]);
      break;
    case ModelKind::zakharov: {
      Field dens(model.grid);
      for (std::size_t i = 0; i < n; ++i) dens.values[i] = std::norm(state[0].values[i]);
      const Field drive = detail::apply_scalar_op(model.abs_grad, dens);
      for (std::size_t i = 0; i < n; ++i) {
        out[0].values[i] *= std::polar(1.0, -tau * state[1].values[i].real());
        out[1].values[i] += I * tau * drive.values[i].real();
      }
      break;
    }
    case ModelKind::maxwell_dirac:
      for (std::size_t i = 0; i < n; ++i) {
        const cplx p1 = state[0].values[i], p2 = state[1].values[i];
        const cplx a0 = state[2].values[i], a1 = state[4].values[i];
        // exp(i tau (a0 + a1 sigma_1))
        const cplx ph = std::exp(I * tau * a0);
        const cplx c = std::cos(tau * a1), s = I * std::sin(tau * a1);
        out[0].values[i] = ph * (c * p1 + s * p2);
        out[1].values[i] = ph * (s * p1 + c * p2);
        const double rho = std::norm(p1) + std::norm(p2);
        const double cur = 2.0 * (std::conj(p1) * p2).real();
        out[3].values[i] += tau * (rho + P.k0 * P.k0 * a0);
        out[5].values[i] += tau * (-cur + P.k0 * P.k0 * a1);
      }
      break;
  }
  return out;
}

/// Conserved functionals of the deterministic flow (plus the Lorenz-gauge
/// residual as a diagnostic for maxwell_dirac).
inline std::map<std::string, double> conserved(const Model& model, const State& state) {
  detail::check_model_state(model, state);
  std::map<std::string, double> out;
  const auto& P = model.params;
  const double dv = model.grid.cell_volume();
  const std::size_t n = model.grid.size();
  auto grad_sq = [&](const Field& f) {
    const auto c = f.spectral();
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += model.grid.k_squared(k) * std::norm(c[k]);
    return s;
  };
  auto b_sq = [&](const Field& f) { return grad_sq(f) + P.k0 * P.k0 * f.norm() * f.norm(); };
  switch (model.kind) {
    case ModelKind::nls: {
      double pot = 0.0;
      for (const auto& v : state[0].values) pot += std::pow(std::abs(v), P.p + 1);
      out["mass"] = std::pow(state[0].norm(), 2);
      out["energy"] = grad_sq(state[0]) - P.sign * (2.0 / (P.p + 1)) * pot * dv;
      break;
    }
    case ModelKind::klein_gordon: {
      double pot = 0.0;
      for (const auto& v : state[0].values) pot += std::pow(std::abs(v), P.p + 1);
      out["energy"] = 0.5 * std::pow(state[1].norm(), 2) + 0.5 * b_sq(state[0]) + P.sign * pot * dv / (P.p + 1);
      break;
    }
    case ModelKind::sine_gordon: {
      double pot = 0.0;
      for (const auto& v : state[0].values) pot += std::cos(v).real();
      out["energy"] = 0.5 * std::pow(state[1].norm(), 2) + 0.5 * b_sq(state[0]) + P.g * pot * dv;
      break;
    }
    case ModelKind::zakharov:
      out["mass"] = std::pow(state[0].norm(), 2);
      break;
    case ModelKind::maxwell_dirac: {
      out["charge"] = std::pow(state[0].norm(), 2) + std::pow(state[1].norm(), 2);
      // d/dt a0 - d/dx a1
      auto c = state[4].spectral();
      for (std::size_t k = 0; k < n; ++k) c[k] *= cplx(0.0, model.grid.k_component(k, 0));
      Field dx_a1 = Field::from_spectral(model.grid, c);
      Field g = state[3];
      g -= dx_a1;
      out["gauge_residual"] = g.norm();
      break;
    }
  }
  return out;
}

/// Gauge-compatible Maxwell-Dirac initial data for a given spinor: zero
/// potentials, a0_t = 0, and d/dx a1_t = rho - mean(rho) so that the
/// Lorenz residual starts at zero and its rate is the (constant) mean
/// charge density.
inline State maxwell_dirac_initial(const Model& model, const Field& psi1, const Field& psi2) {
  if (model.kind != ModelKind::maxwell_dirac) throw std::invalid_argument("maxwell_dirac_initial: wrong model");
  State s = model.zero_state();
  s[0] = psi1;
  s[1] = psi2;
  Field rho(model.grid);
  for (std::size_t i = 0; i < rho.size(); ++i) rho.values[i] = std::norm(psi1.values[i]) + std::norm(psi2.values[i]);
  auto c = rho.spectral();
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double kk = model.grid.k_component(k, 0);
    c[k] = (kk == 0.0 || model.grid.is_nyquist(k)) ? cplx{} : c[k] / cplx(0.0, kk);
  }
  s[5] = Field::from_spectral(model.grid, c);
  for (auto& v : s[5].values) v = v.real();
  return s;
}

// --------------------------------------------------------------------------
// Estimate verification
// --------------------------------------------------------------------------

struct EstimateReport {
  std::string inequality_id;
  std::size_t sample_count = 0;
  std::size_t violations = 0;
  double fitted_constant = 0.0;
  /// Constant the inequality is checked against, when one is known in
  /// closed form on this grid; otherwise only non-finite ratios count as
  /// violations.
  std::optional<double> reference_constant;
  std::string description;
};

/// Random smooth state for the model: spectral coefficients are complex
/// Gaussians times (1+|k|^2)^{-s}, band-limited to |m| < n/6 per axis so
/// that cubic products are alias-free, then scaled to `target_norm` in
/// the generator's metric. sine_gordon samples are real-valued.
inline State random_smooth_state(const Model& model, NormalStream& rng, double target_norm, double decay_s) {
  State s = model.zero_state();
  const auto& g = model.grid;
  const bool real_fields = model.kind == ModelKind::sine_gordon;
  for (std::size_t c = 0; c < s.count(); ++c) {
    CVec coeff(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
      const auto m = g.mode_index(k);
      bool inside = true;
      for (int a = 0; a < g.dim(); ++a)
        if (6 * std::abs(m[a]) >= g.points_per_axis()[a]) inside = false;
      const double re = rng.normal(), im = rng.normal();
      if (inside) coeff[k] = cplx(re, im) * std::pow(1.0 + g.k_squared(k), -decay_s);
    }
    s[c] = Field::from_spectral(g, coeff);
    if (real_fields)
      for (auto& v : s[c].values) v = v.real();
  }
  const double nrm = graph_norm(model.generator, s, 0);
  if (nrm > 0.0) s *= target_norm / nrm;
  return s;
}

namespace detail {

/// sqrt( sum_k 1/(|k|^2 + k0^2) / |D| ): bounds ||f||_inf by ||B f||.
inline double sup_embedding_constant(const Grid& g, double k0) {
  double s = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) s += 1.0 / (g.k_squared(k) + k0 * k0);
  return std::sqrt(s / g.volume());
}

struct RatioAccumulator {
  EstimateReport rep;
  void add(double lhs, double shape, double slack = 1e-10) {
    ++rep.sample_count;
    if (!std::isfinite(lhs) || !std::isfinite(shape)) {
      ++rep.violations;
      return;
    }
    if (shape <= 1e-300) {
      if (lhs > slack) ++rep.violations;
      return;
    }
    const double r = lhs / shape;
    rep.fitted_constant = std::max(rep.fitted_constant, r);
    if (rep.reference_constant && r > *rep.reference_constant * (1.0 + slack) + slack) ++rep.violations;
  }
};

}  // namespace detail

/// Samples random smooth states (and pairs) with norms up to `radius` and
/// checks the growth and Lipschitz bounds of the interaction term:
///   hyp.growth.j{j}:    ||A^j J(phi)|| <= C ||A^j phi||
///   hyp.lipschitz.j{j}: ||A^j (J(phi)-J(psi))|| <= C ||A^j (phi-psi)||
/// for j = 0..j_max, plus, for klein_gordon and sine_gordon, the
/// model-specific bounds with constants derived from the grid's sup-norm
/// embedding constant S (||f||_inf <= S ||B f||):
///   kg.growth        ||J|| <= S^{p-1}/k0 ||phi||^p
///   kg.lipschitz     ||J1-J2|| <= p S^{p-1} max(||phi1||,||phi2||)^{p-1}/k0 ||phi1-phi2||
///   kg.growth_A      ||A J|| <= p S^{p-1}/k0 ||phi||^{p-1} ||A phi||
///   kg.lipschitz_A   (cubic) ||A(J1-J2)|| <= S^2/k0 (4.5a^2+3ab+4.5b^2) ||A(phi1-phi2)||
///   sg.growth        ||J|| <= g/k0 ||phi||
///   sg.growth_A      ||A J||^2 <= g^2 ||phi||^2
///   sg.lipschitz     ||J1-J2|| <= g/k0 ||phi1-phi2||
///   sg.lipschitz_A   ||A(J1-J2)|| - g||d|| <= g S/k0 ||d|| ||A phi1||
/// Never throws on violation; violations are reported.
inline std::vector<EstimateReport> verify_estimates(const Model& model, std::size_t sample_count, int j_max,
                                                    double radius, std::uint64_t seed = 2024) {
  if (j_max < 0) throw std::invalid_argument("verify_estimates: j_max must be >= 0");
  NormalStream rng(seed, 0x5eed);
  const double decay = model.params.N + 1;
  const auto& A = model.generator;
  const int jcap = j_max;

  std::vector<detail::RatioAccumulator> growth(jcap + 1), lip(jcap + 1);
  for (int j = 0; j <= jcap; ++j) {
    growth[j].rep.inequality_id = "hyp.growth.j" + std::to_string(j);
    growth[j].rep.description = "||A^j J(phi)|| <= C ||A^j phi||";
    lip[j].rep.inequality_id = "hyp.lipschitz.j" + std::to_string(j);
    lip[j].rep.description = "||A^j (J(phi)-J(psi))|| <= C ||A^j (phi-psi)||";
  }

  const bool kg = model.kind == ModelKind::klein_gordon;
  const bool sg = model.kind == ModelKind::sine_gordon;
  const double k0 = model.params.k0;
  const double S = (kg || sg) ? detail::sup_embedding_constant(model.grid, k0) : 0.0;
  const int p = model.params.p;
  const double g = model.params.g;
  std::vector<detail::RatioAccumulator> special;
  auto make = [&](std::string id, std::string desc, double ref) {
    detail::RatioAccumulator acc;
    acc.rep.inequality_id = std::move(id);
    acc.rep.description = std::move(desc);
    acc.rep.reference_constant = ref;
    special.push_back(acc);
  };
  if (kg) {
    make("kg.growth", "||J(phi)|| <= K ||phi||^p", std::pow(S, p - 1) / k0);
    make("kg.lipschitz", "||J(phi1)-J(phi2)|| <= C(||phi1||,||phi2||) ||phi1-phi2||", p * std::pow(S, p - 1) / k0);
    make("kg.growth_A", "||A J(phi)|| <= K ||phi||^{p-1} ||A phi||", p * std::pow(S, p - 1) / k0);
    if (p == 3) make("kg.lipschitz_A", "||A(J(phi1)-J(phi2))|| <= C(...) ||A(phi1-phi2)||", S * S / k0);
  }
  if (sg) {
    make("sg.growth", "||J(phi)|| <= ||phi||", std::abs(g) / k0);
    make("sg.growth_A", "||A J(phi)||^2 <= K ||phi||^2", g * g);
    make("sg.lipschitz", "||J(phi)-J(psi)|| <= K ||phi-psi||", std::abs(g) / k0);
    make("sg.lipschitz_A", "||A(J(phi)-J(psi))|| <= K ||phi-psi|| ||A phi|| + ||phi-psi||", std::abs(g) * S / k0);
  }

  for (std::size_t s = 0; s < sample_count; ++s) {
    const double r1 = radius * rng.uniform();
    const double r2 = radius * rng.uniform();
    const State phi = random_smooth_state(model, rng, r1, decay);
    const State psi = random_smooth_state(model, rng, r2, decay);
    const State J1 = apply_J(model, phi);
    const State J2 = apply_J(model, psi);
    const State d = phi - psi;
    const State dJ = J1 - J2;
    const auto nphi = graph_norms(A, phi, std::max(jcap, 2));
    const auto npsi = graph_norms(A, psi, std::max(jcap, 2));
    const auto nJ = graph_norms(A, J1, std::max(jcap, 1));
    const auto nd = graph_norms(A, d, std::max(jcap, 1));
    const auto ndJ = graph_norms(A, dJ, std::max(jcap, 1));
    for (int j = 0; j <= jcap; ++j) {
      growth[j].add(nJ[j], nphi[j]);
      lip[j].add(ndJ[j], nd[j]);
    }
    if (kg) {
      const double a = nphi[0], b = npsi[0];
      special[0].add(nJ[0], std::pow(a, p));
      special[1].add(ndJ[0], std::pow(std::max(a, b), p - 1) * nd[0]);
      special[2].add(nJ[1], std::pow(a, p - 1) * nphi[1]);
      if (p == 3) special[3].add(ndJ[1], (4.5 * a * a + 3.0 * a * b + 4.5 * b * b) * nd[1]);
    }
    if (sg) {
      special[0].add(nJ[0], nphi[0]);
      special[1].add(nJ[1] * nJ[1], nphi[0] * nphi[0]);
      special[2].add(ndJ[0], nd[0]);
      special[3].add(std::max(0.0, ndJ[1] - std::abs(g) * nd[0]), nd[0] * nphi[1]);
    }
  }

  std::vector<EstimateReport> out;
  for (auto& a : growth) out.push_back(a.rep);
  for (auto& a : lip) out.push_back(a.rep);
  for (auto& a : special) out.push_back(a.rep);
  return out;
}

}  // namespace wavesde
