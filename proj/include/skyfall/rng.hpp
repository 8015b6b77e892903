#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace skyfall {

// splitmix64 finalizer, used to spread seeds and derive sub-streams.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent sub-seed for element `index` of a run seeded with `seed`.
// Generation and training derive one stream per trajectory / restart this
// way, so parallel and serial execution draw identical values.
inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed ^ mix64(index + 0x51ed2701));
}

// Deterministic random source. mt19937_64 is fully specified by the
// standard; the distribution transforms live here (instead of
// <random>'s implementation-defined ones) so that streams are
// bit-reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n). Lemire multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller; the spare draw is cached.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace skyfall
