#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace optdisc {

/// Every stochastic routine takes one of these explicitly; a run owns exactly one stream.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline std::size_t uniform_index(std::size_t n, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

/// Inverse-CDF draw; always consumes exactly one uniform.
inline std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

inline bool bernoulli(double p, Rng& rng) { return uniform01(rng) < p; }

}  // namespace optdisc
