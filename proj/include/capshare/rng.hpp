#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace capshare {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Generator for a substream addressed by (seed, key...). The stream depends only
/// on the address, never on scheduling, so parallel loops that index their work
/// items by key are reproducible across worker counts.
inline Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(seed);
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

inline double std_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline double gamma_draw(Rng& rng, double shape, double scale = 1.0) {
  std::gamma_distribution<double> dist(shape, scale);
  return dist(rng);
}

inline double beta_draw(Rng& rng, double a, double b) {
  const double x = gamma_draw(rng, a);
  const double y = gamma_draw(rng, b);
  return x / (x + y);
}

/// Inverse Gamma-2 draw with density proportional to x^{-(shape+2)/2} exp(-scale/(2x)),
/// i.e. x = scale / chi2(shape). Mean is scale/(shape-2) when shape > 2.
inline double inv_gamma2_draw(Rng& rng, double shape, double scale) {
  return scale / (2.0 * gamma_draw(rng, 0.5 * shape));
}

}  // namespace capshare
