#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace unerf::rng {

/// Stream tags for the counter-based generator.
enum class MapKind : std::uint64_t { border = 1, scatterer = 2, amplitude = 3 };

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Stateless draw keyed by (seed, frame, kind, element). The result does not
/// depend on evaluation order, so concurrent renders reproduce serial ones.
struct CounterKey {
  std::uint64_t seed = 0;
  std::uint64_t frame = 0;
  MapKind kind = MapKind::border;

  std::uint64_t bits(std::uint64_t element, std::uint64_t lane = 0) const {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ frame);
    h = splitmix64(h ^ static_cast<std::uint64_t>(kind));
    h = splitmix64(h ^ element);
    return splitmix64(h ^ lane);
  }

  /// Uniform in the open interval (0, 1).
  double uniform(std::uint64_t element, std::uint64_t lane = 0) const {
    return (static_cast<double>(bits(element, lane) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Logistic draw log(u) - log(1 - u).
  double logistic(std::uint64_t element) const {
    const double u = uniform(element);
    return std::log(u) - std::log1p(-u);
  }

  /// Standard normal via Box-Muller.
  double normal(std::uint64_t element) const {
    const double u1 = uniform(element, 0);
    const double u2 = uniform(element, 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
};

}  // namespace unerf::rng
