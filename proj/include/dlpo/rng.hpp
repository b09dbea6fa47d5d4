#pragma once

#include <cstdint>
#include <random>

namespace dlpo {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seeded 64-bit Mersenne Twister with the handful of draws the library needs.
// Independent streams are derived from a root seed plus stream coordinates so
// that batch elements can be sampled in any order (or in parallel) and still
// reproduce bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                    std::uint64_t c = 0) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
    h = splitmix64(h ^ (c + 0x85157af5ULL));
    return Rng(h);
  }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

  // Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(engine_);
  }

  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace dlpo
