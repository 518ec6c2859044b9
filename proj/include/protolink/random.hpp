#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace protolink {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent, schedule-free
/// substreams from a master seed.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub) {
  return derive_seed(derive_seed(seed, stream), sub);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) { return Rng(derive_seed(seed, stream)); }
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub) {
  return Rng(derive_seed(seed, stream, sub));
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

inline double beta_draw(Rng& rng, double a, double b) {
  double x = std::gamma_distribution<double>(a, 1.0)(rng);
  double y = std::gamma_distribution<double>(b, 1.0)(rng);
  return x / (x + y);
}

/// Draws an index with probability proportional to `weights` given their sum.
inline std::size_t categorical(Rng& rng, std::span<const double> weights, double total) {
  double u = uniform01(rng) * total;
  std::size_t last_positive = weights.size();
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0) continue;
    last_positive = k;
    u -= weights[k];
    if (u < 0) return k;
  }
  if (last_positive == weights.size()) throw std::domain_error("categorical: no positive weight");
  return last_positive;  // rounding slack
}

inline std::size_t categorical(Rng& rng, std::span<const double> weights) {
  double total = 0;
  for (double w : weights) total += w;
  return categorical(rng, weights, total);
}

}  // namespace protolink
