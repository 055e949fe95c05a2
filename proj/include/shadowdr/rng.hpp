#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace shadowdr::rng {

/// SplitMix64 finalizer (Steele, Lea & Flood; constants from Vigna's reference).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of the stream at `path` below `master`.
///
/// Splitting rule: fold each index into the state with
/// state = mix64(state ^ mix64(index + 1)), starting from mix64(master).
/// Streams depend only on (master, path), never on scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t s = mix64(master);
  for (auto idx : path) s = mix64(s ^ mix64(idx + 1));
  return s;
}

using Engine = std::mt19937_64;

inline Engine stream(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  return Engine(derive_seed(master, path));
}

/// Standard normal by the polar method; stable across standard libraries.
class StandardNormal {
 public:
  template <class G>
  double operator()(G& gen) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform(gen) - 1.0;
      v = 2.0 * uniform(gen) - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  /// Uniform on [0, 1) with 53 random bits.
  template <class G>
  static double uniform(G& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
  }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Uniform integer in [0, n) by Lemire's multiply-shift with rejection.
template <class G>
std::uint64_t uniform_index(G& gen, std::uint64_t n) {
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t x = gen();
    const unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
    if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
  }
}

}  // namespace shadowdr::rng
