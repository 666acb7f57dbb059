#pragma once

/// \file grid.hpp
/// Periodic lattices, complex fields on them and the Parseval-unitary
/// spectral transform shared by every other module.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavesde {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwPlan {
  fftw_plan plan = nullptr;
  FftwPlan() = default;
  explicit FftwPlan(fftw_plan p) : plan(p) {}
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;
  ~FftwPlan() {
    if (plan) {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};

}  // namespace detail

/// Immutable periodic lattice on [0, L_0) x ... x [0, L_{d-1}).
///
/// Copies are cheap handles onto shared, read-only data (wavenumbers and
/// FFT plans), so a Grid may be passed by value between threads.
class Grid {
 public:
  Grid() = default;

  Grid(std::vector<int> points_per_axis, std::vector<double> lengths) {
    const auto dim = points_per_axis.size();
    if (dim < 1 || dim > 3) throw std::invalid_argument("grid dimension must be 1, 2 or 3");
    if (lengths.size() != dim) throw std::invalid_argument("one length per axis required");
    for (std::size_t a = 0; a < dim; ++a) {
      const int n = points_per_axis[a];
      if (n < 4) throw std::invalid_argument("grid axis needs at least 4 points");
      if (n % 2 != 0) throw std::invalid_argument("grid axis size must be even, got " + std::to_string(n));
      if (!(lengths[a] > 0.0) || !std::isfinite(lengths[a]))
        throw std::invalid_argument("grid lengths must be positive");
    }
    auto impl = std::make_shared<Impl>();
    impl->n = std::move(points_per_axis);
    impl->L = std::move(lengths);
    impl->build();
    impl_ = std::move(impl);
  }

  [[nodiscard]] bool valid() const noexcept { return static_cast<bool>(impl_); }
  [[nodiscard]] int dim() const { return static_cast<int>(impl().n.size()); }
  [[nodiscard]] const std::vector<int>& points_per_axis() const { return impl().n; }
  [[nodiscard]] const std::vector<double>& lengths() const { return impl().L; }
  [[nodiscard]] std::size_t size() const { return impl().total; }
  [[nodiscard]] double volume() const { return impl().volume; }
  [[nodiscard]] double cell_volume() const { return impl().volume / static_cast<double>(impl().total); }

  /// Wavenumbers of one axis in FFT storage order: 2*pi*m/L for
  /// m = 0..n/2-1, -n/2..-1.
  [[nodiscard]] const std::vector<double>& axis_wavenumbers(int axis) const { return impl().kaxis.at(axis); }

  /// Per-axis integer mode labels (FFT order) for a flat spectral index.
  [[nodiscard]] std::vector<int> mode_index(std::size_t flat) const {
    const auto& I = impl();
    std::vector<int> out(I.n.size());
    for (int a = static_cast<int>(I.n.size()) - 1; a >= 0; --a) {
      const int n = I.n[a];
      const int m = static_cast<int>(flat % n);
      flat /= n;
      out[a] = m < n / 2 ? m : m - n;
    }
    return out;
  }

  /// Physical coordinates of a flat lattice index.
  [[nodiscard]] std::vector<double> coordinates(std::size_t flat) const {
    const auto& I = impl();
    std::vector<double> out(I.n.size());
    for (int a = static_cast<int>(I.n.size()) - 1; a >= 0; --a) {
      const int n = I.n[a];
      out[a] = I.L[a] * static_cast<double>(flat % n) / n;
      flat /= n;
    }
    return out;
  }

  [[nodiscard]] double k_component(std::size_t flat, int axis) const { return impl().kvec[flat * impl().n.size() + axis]; }
  [[nodiscard]] double k_squared(std::size_t flat) const { return impl().k2[flat]; }
  [[nodiscard]] double k_abs(std::size_t flat) const { return std::sqrt(impl().k2[flat]); }
  /// True when any axis sits on the unpaired -n/2 mode.
  [[nodiscard]] bool is_nyquist(std::size_t flat) const { return impl().nyquist[flat] != 0; }
  /// 2/3-rule mask: every axis index satisfies |m| < n/3.
  [[nodiscard]] bool in_dealias_band(std::size_t flat) const { return impl().dealias[flat] != 0; }

  /// Forward Parseval-unitary transform: sum |c_k|^2 equals the continuum
  /// L^2 norm sum |f_x|^2 * cell_volume.
  [[nodiscard]] CVec forward(std::span<const cplx> values) const {
    const auto& I = impl();
    if (values.size() != I.total) throw std::invalid_argument("forward: size mismatch");
    CVec out(I.total);
    CVec in(values.begin(), values.end());
    fftw_execute_dft(I.fwd.plan, reinterpret_cast<fftw_complex*>(in.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    const double s = std::sqrt(cell_volume() / static_cast<double>(I.total));
    for (auto& c : out) c *= s;
    return out;
  }

  [[nodiscard]] CVec inverse(std::span<const cplx> coeffs) const {
    const auto& I = impl();
    if (coeffs.size() != I.total) throw std::invalid_argument("inverse: size mismatch");
    CVec out(I.total);
    CVec in(coeffs.begin(), coeffs.end());
    fftw_execute_dft(I.bwd.plan, reinterpret_cast<fftw_complex*>(in.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    const double s = 1.0 / std::sqrt(cell_volume() * static_cast<double>(I.total));
    for (auto& c : out) c *= s;
    return out;
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    if (a.impl_ == b.impl_) return true;
    if (!a.impl_ || !b.impl_) return false;
    return a.impl_->n == b.impl_->n && a.impl_->L == b.impl_->L;
  }

 private:
  struct Impl {
    std::vector<int> n;
    std::vector<double> L;
    std::size_t total = 0;
    double volume = 1.0;
    std::vector<std::vector<double>> kaxis;
    std::vector<double> kvec;
    std::vector<double> k2;
    std::vector<char> nyquist;
    std::vector<char> dealias;
    detail::FftwPlan fwd;
    detail::FftwPlan bwd;

    void build() {
      total = 1;
      volume = 1.0;
      for (std::size_t a = 0; a < n.size(); ++a) {
        total *= static_cast<std::size_t>(n[a]);
        volume *= L[a];
        std::vector<double> ks(n[a]);
        for (int m = 0; m < n[a]; ++m) {
          const int mm = m < n[a] / 2 ? m : m - n[a];
          ks[m] = 2.0 * std::numbers::pi * mm / L[a];
        }
        kaxis.push_back(std::move(ks));
      }
      const std::size_t d = n.size();
      kvec.assign(total * d, 0.0);
      k2.assign(total, 0.0);
      nyquist.assign(total, 0);
      dealias.assign(total, 1);
      for (std::size_t f = 0; f < total; ++f) {
        std::size_t rem = f;
        for (int a = static_cast<int>(d) - 1; a >= 0; --a) {
          const int m = static_cast<int>(rem % n[a]);
          rem /= n[a];
          const double k = kaxis[a][m];
          kvec[f * d + a] = k;
          k2[f] += k * k;
          const int mm = m < n[a] / 2 ? m : m - n[a];
          if (mm == -n[a] / 2) nyquist[f] = 1;
          if (3 * std::abs(mm) >= n[a]) dealias[f] = 0;
        }
      }
      std::lock_guard lock(detail::fftw_planner_mutex());
      std::vector<fftw_complex> a(total), b(total);
      const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
      fwd.plan = fftw_plan_dft(static_cast<int>(d), n.data(), a.data(), b.data(), FFTW_FORWARD, flags);
      bwd.plan = fftw_plan_dft(static_cast<int>(d), n.data(), a.data(), b.data(), FFTW_BACKWARD, flags);
      if (!fwd.plan || !bwd.plan) throw std::runtime_error("FFTW planning failed");
    }
  };

  const Impl& impl() const {
    if (!impl_) throw std::logic_error("use of an empty Grid");
    return *impl_;
  }

  std::shared_ptr<const Impl> impl_;
};

/// Validating factory; rejects odd or tiny sizes and non-positive lengths.
inline Grid make_grid(int dim, std::vector<int> points_per_axis, std::vector<double> lengths) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("grid dimension must be 1, 2 or 3");
  if (static_cast<int>(points_per_axis.size()) != dim)
    throw std::invalid_argument("points_per_axis must have one entry per axis");
  return Grid(std::move(points_per_axis), std::move(lengths));
}

/// A complex scalar function sampled on a Grid (physical-space values).
struct Field {
  Grid grid;
  CVec values;

  Field() = default;
  explicit Field(Grid g) : grid(std::move(g)), values(grid.size(), cplx{}) {}
  Field(Grid g, CVec v) : grid(std::move(g)), values(std::move(v)) {
    if (values.size() != grid.size()) throw std::invalid_argument("Field: value count does not match grid");
  }

  [[nodiscard]] std::size_t size() const { return values.size(); }
  [[nodiscard]] CVec spectral() const { return grid.forward(values); }
  static Field from_spectral(const Grid& g, std::span<const cplx> coeffs) { return Field(g, g.inverse(coeffs)); }

  /// Continuum L^2 norm (cell-volume weighted).
  [[nodiscard]] double norm() const {
    double s = 0.0;
    for (const auto& v : values) s += std::norm(v);
    return std::sqrt(s * grid.cell_volume());
  }

  Field& operator+=(const Field& o) {
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
    return *this;
  }
  Field& operator-=(const Field& o) {
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= o.values[i];
    return *this;
  }
  Field& operator*=(cplx s) {
    for (auto& v : values) v *= s;
    return *this;
  }
};

/// Hilbert inner product <a, b> = integral conj(a) b.
inline cplx inner(const Field& a, const Field& b) {
  cplx s{};
  for (std::size_t i = 0; i < a.values.size(); ++i) s += std::conj(a.values[i]) * b.values[i];
  return s * a.grid.cell_volume();
}

/// Bilinear pairing integral a b (no conjugation).
inline cplx pairing(const Field& a, const Field& b) {
  cplx s{};
  for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
  return s * a.grid.cell_volume();
}

/// Ordered tuple of component fields on one grid, e.g. (psi, v).
struct State {
  std::vector<Field> components;
  std::vector<std::string> roles;

  State() = default;
  State(const Grid& g, std::vector<std::string> role_names) : roles(std::move(role_names)) {
    components.assign(roles.size(), Field(g));
  }

  [[nodiscard]] std::size_t count() const { return components.size(); }
  [[nodiscard]] const Grid& grid() const { return components.at(0).grid; }
  Field& operator[](std::size_t i) { return components[i]; }
  const Field& operator[](std::size_t i) const { return components[i]; }

  /// Zero state with the same shape.
  [[nodiscard]] State zeros_like() const {
    State z = *this;
    for (auto& c : z.components) std::fill(c.values.begin(), c.values.end(), cplx{});
    return z;
  }

  State& operator+=(const State& o) {
    for (std::size_t c = 0; c < components.size(); ++c) components[c] += o.components[c];
    return *this;
  }
  State& operator-=(const State& o) {
    for (std::size_t c = 0; c < components.size(); ++c) components[c] -= o.components[c];
    return *this;
  }
  State& operator*=(cplx s) {
    for (auto& c : components) c *= s;
    return *this;
  }

  [[nodiscard]] bool all_finite() const {
    for (const auto& c : components)
      for (const auto& v : c.values)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
  }
};

inline State operator+(State a, const State& b) { return a += b; }
inline State operator-(State a, const State& b) { return a -= b; }
inline State operator*(cplx s, State a) { return a *= s; }

/// y += s * x
inline void axpy(cplx s, const State& x, State& y) {
  for (std::size_t c = 0; c < y.count(); ++c)
    for (std::size_t i = 0; i < y[c].size(); ++i) y[c].values[i] += s * x[c].values[i];
}

/// Pointwise product of every component with a real or complex potential.
inline State multiply_pointwise(const State& s, const Field& potential) {
  State out = s;
  for (auto& c : out.components)
    for (std::size_t i = 0; i < c.size(); ++i) c.values[i] *= potential.values[i];
  return out;
}

/// Spectral coefficients of all components, laid out component-major.
inline std::vector<CVec> to_spectral(const State& s) {
  std::vector<CVec> out;
  out.reserve(s.count());
  for (const auto& c : s.components) out.push_back(c.spectral());
  return out;
}

inline State from_spectral(const State& shape, const std::vector<CVec>& coeffs) {
  State out = shape;
  for (std::size_t c = 0; c < shape.count(); ++c) out[c] = Field::from_spectral(shape.grid(), coeffs[c]);
  return out;
}

/// 2/3-rule truncation of one field.
inline Field dealias(const Field& f) {
  auto c = f.spectral();
  for (std::size_t k = 0; k < c.size(); ++k)
    if (!f.grid.in_dealias_band(k)) c[k] = 0.0;
  return Field::from_spectral(f.grid, c);
}

inline State dealias(const State& s) {
  State out = s;
  for (auto& c : out.components) c = dealias(c);
  return out;
}

/// Field from a callable of physical coordinates.
template <class F>
Field sample_field(const Grid& g, F&& fn) {
  Field out(g);
  for (std::size_t i = 0; i < g.size(); ++i) out.values[i] = fn(g.coordinates(i));
  return out;
}

}  // namespace wavesde
