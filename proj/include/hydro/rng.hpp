#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace hydro {

/// Purpose-scoped RNG streams. Every stochastic consumer owns its own stream
/// so that disabling one feature (e.g. source rollouts) leaves the draw
/// sequences of every other feature untouched.
enum class Stream : uint64_t {
  ensemble = 1,
  member = 2,
  rollout = 3,
  buffer_sample = 4,
  dual_augment = 5,
  target_batch = 6,
  uniform_ref = 7,
  eval = 8,
  datagen = 9,
  instance = 10,
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::mt19937_64 make_stream(uint64_t seed, Stream id, uint64_t salt = 0) {
  uint64_t s = splitmix64(seed ^ splitmix64(uint64_t(id)) ^ splitmix64(salt * 0xA24BAED4963EE407ull));
  return std::mt19937_64(s);
}

/// Uniform double in [0, 1); 53-bit resolution, implementation independent.
inline double uniform01(std::mt19937_64& g) {
  return double(g() >> 11) * 0x1.0p-53;
}

/// Uniform index in [0, n).
inline size_t uniform_index(std::mt19937_64& g, size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  return size_t(g() % n);
}

/// Draw from a categorical distribution by cumulative scan. `p` must sum to 1
/// within solver tolerance; the last positive-mass index absorbs any rounding
/// shortfall.
inline int sample_categorical(std::span<const double> p, std::mt19937_64& g) {
  double u = uniform01(g);
  double cum = 0.0;
  int last_pos = -1;
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) last_pos = int(i);
    cum += p[i];
    if (u < cum) return int(i);
  }
  if (last_pos < 0) throw std::invalid_argument("sample_categorical: zero distribution");
  return last_pos;
}

}  // namespace hydro
