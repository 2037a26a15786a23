#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace stringgp {

using Rng = std::mt19937_64;

// Deterministic child stream keyed by a master seed and a tuple of indices
// (for example iteration, dimension, string).
inline Rng substream(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * keys.size());
  words.push_back(static_cast<std::uint32_t>(master));
  words.push_back(static_cast<std::uint32_t>(master >> 32));
  for (auto k : keys) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline double std_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  return u(rng);
}

// Gamma draw with shape/rate parameterization.
inline double gamma_rate(Rng& rng, double shape, double rate) {
  std::gamma_distribution<double> g(shape, 1.0 / rate);
  return g(rng);
}

}  // namespace stringgp
