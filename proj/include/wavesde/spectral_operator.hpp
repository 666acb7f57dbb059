#pragma once

/// \file spectral_operator.hpp
/// Fourier multiplier operators with (possibly matrix-valued) symbols,
/// their exact propagators exp(-i t A) and graph norms ||A^j phi||.

#include "grid.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wavesde {

/// Parameters consumed by make_operator; only the ones a kind needs are read.
struct OperatorParams {
  std::optional<double> k0;  ///< mass shift of B = sqrt(-Laplacian + k0^2)
  std::optional<double> m;   ///< Dirac mass
};

/// One diagonal block of a multiplier operator acting on `size` consecutive
/// components. The inner product on the block is weighted per component by
/// `metric` (e.g. the energy weight |B(k)| on the displacement of a wave
/// block), and the symbol must be Hermitian in that inner product.
struct SymbolBlock {
  int size = 1;
  std::vector<cplx> symbol;    ///< npts * size * size, row-major per mode
  std::vector<double> metric;  ///< npts * size, strictly positive
  // Filled by finalize(): eigen-decomposition of W S W^{-1} per mode.
  std::vector<double> eigval;  ///< npts * size
  std::vector<cplx> eigvec;    ///< npts * size * size, column-major per mode
  double hermitian_deviation = 0.0;
};

/// Immutable spectral operator; copies share the underlying tables.
class SpectralOperator {
 public:
  SpectralOperator() = default;

  SpectralOperator(Grid grid, std::vector<SymbolBlock> blocks, std::string kind) {
    auto impl = std::make_shared<Impl>();
    impl->grid = std::move(grid);
    impl->blocks = std::move(blocks);
    impl->kind = std::move(kind);
    impl->finalize();
    impl_ = std::move(impl);
  }

  [[nodiscard]] const Grid& grid() const { return impl().grid; }
  [[nodiscard]] const std::string& kind() const { return impl().kind; }
  [[nodiscard]] int components() const { return impl().components; }
  [[nodiscard]] const std::vector<SymbolBlock>& blocks() const { return impl().blocks; }
  [[nodiscard]] bool hermitian() const { return impl().hermitian; }
  [[nodiscard]] double hermitian_deviation() const { return impl().max_deviation; }

  /// Full s x s symbol at one spectral index (block-diagonal assembly).
  [[nodiscard]] Eigen::MatrixXcd symbol_at(std::size_t k) const {
    const int s = components();
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(s, s);
    int off = 0;
    for (const auto& b : impl().blocks) {
      for (int r = 0; r < b.size; ++r)
        for (int c = 0; c < b.size; ++c) out(off + r, off + c) = b.symbol[(k * b.size + r) * b.size + c];
      off += b.size;
    }
    return out;
  }

  [[nodiscard]] Eigen::VectorXd metric_at(std::size_t k) const {
    Eigen::VectorXd out(components());
    int off = 0;
    for (const auto& b : impl().blocks) {
      for (int r = 0; r < b.size; ++r) out(off + r) = b.metric[k * b.size + r];
      off += b.size;
    }
    return out;
  }

  /// Largest |eigenvalue| over all modes (operator norm on the grid).
  [[nodiscard]] double spectral_radius() const { return impl().spectral_radius; }
  /// Smallest |eigenvalue| over all modes.
  [[nodiscard]] double spectral_floor() const { return impl().spectral_floor; }

 private:
  struct Impl {
    Grid grid;
    std::vector<SymbolBlock> blocks;
    std::string kind;
    int components = 0;
    bool hermitian = true;
    double max_deviation = 0.0;
    double spectral_radius = 0.0;
    double spectral_floor = 0.0;

    void finalize() {
      const std::size_t n = grid.size();
      components = 0;
      spectral_floor = std::numeric_limits<double>::infinity();
      for (auto& b : blocks) {
        components += b.size;
        const auto s = static_cast<std::size_t>(b.size);
        if (b.symbol.size() != n * s * s || b.metric.size() != n * s)
          throw std::invalid_argument("symbol block has the wrong number of entries");
        b.eigval.assign(n * s, 0.0);
        b.eigvec.assign(n * s * s, cplx{});
        b.hermitian_deviation = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          Eigen::MatrixXcd H(b.size, b.size);
          double scale = 1.0;
          for (int r = 0; r < b.size; ++r) {
            const double wr = b.metric[k * s + r];
            if (!(wr > 0.0)) throw std::invalid_argument("metric weights must be positive");
            for (int c = 0; c < b.size; ++c) {
              const double wc = b.metric[k * s + c];
              H(r, c) = wr * b.symbol[(k * s + r) * s + c] / wc;
              scale = std::max(scale, std::abs(H(r, c)));
            }
          }
          const double dev = (H - H.adjoint()).cwiseAbs().maxCoeff() / scale;
          b.hermitian_deviation = std::max(b.hermitian_deviation, dev);
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (H + H.adjoint()));
          for (int r = 0; r < b.size; ++r) {
            const double lam = es.eigenvalues()(r);
            b.eigval[k * s + r] = lam;
            spectral_radius = std::max(spectral_radius, std::abs(lam));
            spectral_floor = std::min(spectral_floor, std::abs(lam));
            for (int c = 0; c < b.size; ++c) b.eigvec[(k * s) * s + c * s + r] = es.eigenvectors()(r, c);
          }
        }
        max_deviation = std::max(max_deviation, b.hermitian_deviation);
      }
      hermitian = max_deviation < 1e-13;
    }
  };

  const Impl& impl() const {
    if (!impl_) throw std::logic_error("use of an empty SpectralOperator");
    return *impl_;
  }

  std::shared_ptr<const Impl> impl_;
};

namespace detail {

inline SymbolBlock scalar_block(const Grid& g, auto&& symbol_of_k) {
  SymbolBlock b;
  b.size = 1;
  b.symbol.resize(g.size());
  b.metric.assign(g.size(), 1.0);
  for (std::size_t k = 0; k < g.size(); ++k) b.symbol[k] = symbol_of_k(k);
  return b;
}

inline double require(const std::optional<double>& v, const char* name) {
  if (!v) throw std::invalid_argument(std::string("operator parameter missing: ") + name);
  if (!(*v >= 0.0)) throw std::invalid_argument(std::string("operator parameter must be >= 0: ") + name);
  return *v;
}

/// A = i [[0, I], [-B^2, 0]], so exp(-i t A) is the classical
/// cos/sin wave propagator. Hermitian in the energy weights (|B|, 1).
inline SymbolBlock wave_block(const Grid& g, double k0) {
  if (!(k0 > 0.0)) throw std::invalid_argument("wave_block needs k0 > 0 so that B is invertible");
  SymbolBlock b;
  b.size = 2;
  b.symbol.assign(g.size() * 4, cplx{});
  b.metric.assign(g.size() * 2, 1.0);
  const cplx I(0.0, 1.0);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double b2 = g.k_squared(k) + k0 * k0;
    b.symbol[k * 4 + 1] = I;
    b.symbol[k * 4 + 2] = -I * b2;
    b.metric[k * 2 + 0] = std::sqrt(b2);
  }
  return b;
}

/// 1+1-D Dirac symbol sigma_1 k + sigma_3 m; the k-part is dropped on the
/// unpaired Nyquist mode.
inline SymbolBlock dirac_block(const Grid& g, double m) {
  if (g.dim() != 1) throw std::invalid_argument("dirac_1d requires a one-dimensional grid");
  SymbolBlock b;
  b.size = 2;
  b.symbol.assign(g.size() * 4, cplx{});
  b.metric.assign(g.size() * 2, 1.0);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double kk = g.is_nyquist(k) ? 0.0 : g.k_component(k, 0);
    b.symbol[k * 4 + 0] = m;
    b.symbol[k * 4 + 1] = kk;
    b.symbol[k * 4 + 2] = kk;
    b.symbol[k * 4 + 3] = -m;
  }
  return b;
}

}  // namespace detail

/// Scales every symbol by a real factor (metric unchanged).
inline SpectralOperator scaled(const SpectralOperator& op, double factor) {
  auto blocks = op.blocks();
  for (auto& b : blocks)
    for (auto& v : b.symbol) v *= factor;
  return SpectralOperator(op.grid(), std::move(blocks), op.kind());
}

/// Block-diagonal direct sum of operators on the same grid.
inline SpectralOperator block_diag(const std::vector<SpectralOperator>& ops, std::string kind) {
  if (ops.empty()) throw std::invalid_argument("block_diag of nothing");
  std::vector<SymbolBlock> blocks;
  for (const auto& op : ops) {
    if (!(op.grid() == ops.front().grid())) throw std::invalid_argument("block_diag: grids differ");
    for (const auto& b : op.blocks()) blocks.push_back(b);
  }
  return SpectralOperator(ops.front().grid(), std::move(blocks), std::move(kind));
}

/// Builds one of the named operators:
///   identity, laplacian (-|k|^2), neg_laplacian (|k|^2), shifted_sqrt
///   (sqrt(|k|^2+k0^2)), abs_grad (|k|), wave_block, dirac_1d,
///   zakharov_block (diag(|k|^2, -|k|)), maxwell_dirac_block
///   (dirac_1d + two wave blocks).
inline SpectralOperator make_operator(std::string_view kind, const Grid& grid, const OperatorParams& params = {}) {
  using detail::scalar_block;
  const std::string name(kind);
  if (kind == "identity") return {grid, {scalar_block(grid, [](std::size_t) { return cplx(1.0); })}, name};
  if (kind == "laplacian")
    return {grid, {scalar_block(grid, [&](std::size_t k) { return cplx(-grid.k_squared(k)); })}, name};
  if (kind == "neg_laplacian")
    return {grid, {scalar_block(grid, [&](std::size_t k) { return cplx(grid.k_squared(k)); })}, name};
  if (kind == "shifted_sqrt") {
    const double k0 = detail::require(params.k0, "k0");
    return {grid, {scalar_block(grid, [&](std::size_t k) { return cplx(std::sqrt(grid.k_squared(k) + k0 * k0)); })}, name};
  }
  if (kind == "abs_grad")
    return {grid,
            {scalar_block(grid, [&](std::size_t k) { return grid.is_nyquist(k) ? cplx{} : cplx(grid.k_abs(k)); })},
            name};
  if (kind == "wave_block") return {grid, {detail::wave_block(grid, detail::require(params.k0, "k0"))}, name};
  if (kind == "dirac_1d") return {grid, {detail::dirac_block(grid, detail::require(params.m, "m"))}, name};
  if (kind == "zakharov_block") {
    auto schr = scalar_block(grid, [&](std::size_t k) { return cplx(grid.k_squared(k)); });
    auto ion = scalar_block(grid, [&](std::size_t k) { return grid.is_nyquist(k) ? cplx{} : cplx(-grid.k_abs(k)); });
    return {grid, {schr, ion}, name};
  }
  if (kind == "maxwell_dirac_block") {
    const double m = detail::require(params.m, "m");
    const double k0 = detail::require(params.k0, "k0");
    return {grid, {detail::dirac_block(grid, m), detail::wave_block(grid, k0), detail::wave_block(grid, k0)}, name};
  }
  throw std::invalid_argument("unknown operator kind: " + name);
}

namespace detail {

inline void check_shape(const SpectralOperator& op, const State& s) {
  if (static_cast<int>(s.count()) != op.components())
    throw std::invalid_argument("state has " + std::to_string(s.count()) + " components, operator expects " +
                                std::to_string(op.components()));
  for (const auto& c : s.components)
    if (!(c.grid == op.grid())) throw std::invalid_argument("state grid does not match operator grid");
}

}  // namespace detail

/// Multiplies spectral coefficient vectors by symbol(k).
inline std::vector<CVec> apply_spectral(const SpectralOperator& op, const std::vector<CVec>& in) {
  std::vector<CVec> out(in.size(), CVec(op.grid().size()));
  const std::size_t n = op.grid().size();
  int off = 0;
  for (const auto& b : op.blocks()) {
    const auto s = static_cast<std::size_t>(b.size);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t r = 0; r < s; ++r) {
        cplx acc{};
        for (std::size_t c = 0; c < s; ++c) acc += b.symbol[(k * s + r) * s + c] * in[off + c][k];
        out[off + r][k] = acc;
      }
    off += b.size;
  }
  return out;
}

inline State apply(const SpectralOperator& op, const State& state) {
  detail::check_shape(op, state);
  return from_spectral(state, apply_spectral(op, to_spectral(state)));
}

/// exp(-i t symbol) applied to spectral coefficients.
inline std::vector<CVec> propagate_spectral(const SpectralOperator& op, double t, const std::vector<CVec>& in) {
  if (!op.hermitian())
    throw std::invalid_argument("propagate requires a Hermitian symbol (deviation " +
                                std::to_string(op.hermitian_deviation()) + ")");
  std::vector<CVec> out(in.size(), CVec(op.grid().size()));
  const std::size_t n = op.grid().size();
  int off = 0;
  std::vector<cplx> y, z;
  for (const auto& b : op.blocks()) {
    const auto s = static_cast<std::size_t>(b.size);
    y.resize(s);
    z.resize(s);
    for (std::size_t k = 0; k < n; ++k) {
      if (s == 1) {
        out[off][k] = std::polar(1.0, -t * b.eigval[k]) * in[off][k];
        continue;
      }
      const cplx* V = &b.eigvec[k * s * s];
      // y = V^H W x
      for (std::size_t c = 0; c < s; ++c) {
        cplx acc{};
        for (std::size_t r = 0; r < s; ++r) acc += std::conj(V[c * s + r]) * b.metric[k * s + r] * in[off + r][k];
        y[c] = acc * std::polar(1.0, -t * b.eigval[k * s + c]);
      }
      // out = W^{-1} V y
      for (std::size_t r = 0; r < s; ++r) {
        cplx acc{};
        for (std::size_t c = 0; c < s; ++c) acc += V[c * s + r] * y[c];
        out[off + r][k] = acc / b.metric[k * s + r];
      }
    }
    off += b.size;
  }
  return out;
}

/// exp(-i t A) state; exactly norm preserving per mode up to roundoff.
inline State propagate(const SpectralOperator& op, double t, const State& state) {
  detail::check_shape(op, state);
  if (t == 0.0) return state;
  return from_spectral(state, propagate_spectral(op, t, to_spectral(state)));
}

/// Norm induced by the operator's metric on spectral coefficients.
inline double metric_norm(const SpectralOperator& op, const std::vector<CVec>& coeffs) {
  const std::size_t n = op.grid().size();
  double acc = 0.0;
  int off = 0;
  for (const auto& b : op.blocks()) {
    for (int r = 0; r < b.size; ++r)
      for (std::size_t k = 0; k < n; ++k) acc += b.metric[k * b.size + r] * b.metric[k * b.size + r] * std::norm(coeffs[off + r][k]);
    off += b.size;
  }
  return std::sqrt(acc);
}

/// ||A^j phi|| in the operator's metric; j = 0 gives the state norm.
inline double graph_norm_spectral(const SpectralOperator& op, const std::vector<CVec>& coeffs, int j) {
  if (j < 0) throw std::invalid_argument("graph_norm: j must be non-negative");
  auto c = coeffs;
  for (int i = 0; i < j; ++i) c = apply_spectral(op, c);
  return metric_norm(op, c);
}

inline double graph_norm(const SpectralOperator& op, const State& state, int j) {
  detail::check_shape(op, state);
  if (j < 0) throw std::invalid_argument("graph_norm: j must be non-negative");
  return graph_norm_spectral(op, to_spectral(state), j);
}

/// All graph norms ||A^j phi||, j = 0..N, sharing the transforms.
inline std::vector<double> graph_norms(const SpectralOperator& op, const State& state, int N) {
  detail::check_shape(op, state);
  std::vector<double> out;
  auto c = to_spectral(state);
  for (int j = 0; j <= N; ++j) {
    if (j > 0) c = apply_spectral(op, c);
    out.push_back(metric_norm(op, c));
  }
  return out;
}

/// Inner product matching metric_norm.
inline cplx metric_inner(const SpectralOperator& op, const State& a, const State& b) {
  const auto ca = to_spectral(a);
  const auto cb = to_spectral(b);
  const std::size_t n = op.grid().size();
  cplx acc{};
  int off = 0;
  for (const auto& blk : op.blocks()) {
    for (int r = 0; r < blk.size; ++r)
      for (std::size_t k = 0; k < n; ++k) {
        const double w = blk.metric[k * blk.size + r];
        acc += w * w * std::conj(ca[off + r][k]) * cb[off + r][k];
      }
    off += blk.size;
  }
  return acc;
}

}  // namespace wavesde
