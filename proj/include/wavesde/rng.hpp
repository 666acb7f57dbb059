#pragma once

/// \file rng.hpp
/// Counter-based normal variates. Every draw is a pure function of
/// (seed, stream, step, index), so parallel paths are reproducible no
/// matter how they are scheduled.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace wavesde {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                                 std::uint64_t index, std::uint64_t lane) noexcept {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ stream);
  h = splitmix64(h ^ step);
  h = splitmix64(h ^ index);
  return splitmix64(h ^ lane);
}

/// Uniform in (0, 1), never 0.
constexpr double to_unit_open(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

}  // namespace detail

/// Standard normal draw addressed by a 4-tuple counter (Box-Muller).
inline double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t step, std::uint64_t index) noexcept {
  const double u1 = detail::to_unit_open(detail::hash_key(seed, stream, step, index, 0));
  const double u2 = detail::to_unit_open(detail::hash_key(seed, stream, step, index, 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t step, std::uint64_t index) noexcept {
  return detail::to_unit_open(detail::hash_key(seed, stream, step, index, 2));
}

/// Sequential convenience wrapper over the counter scheme.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}
  double normal() noexcept { return counter_normal(seed_, stream_, 0, next_++); }
  double uniform() noexcept { return counter_uniform(seed_, stream_, 0, next_++); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t next_ = 0;
};

}  // namespace wavesde
