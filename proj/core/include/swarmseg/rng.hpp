#pragma once

#include <cstdint>
#include <random>

namespace swarmseg {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stateless per-coordinate noise in [0,1). Used for world textures so that a
// pixel's appearance depends only on (coords, salt, seed), never on evaluation
// order.
inline double hash_unit(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t seed) {
  std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc908ULL);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

// Sequential generator. mt19937_64 is fully specified by the standard and the
// mapping to doubles below avoids library distribution objects, so streams are
// bit-identical across platforms for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n); n > 0. Modulo bias is immaterial for the small n used here.
  int uniform_int(int n) { return static_cast<int>(gen_() % static_cast<std::uint64_t>(n)); }

  bool coin(double p) { return uniform() < p; }

  // Independent stream derived from this generator's seed, not its state.
  Rng child(std::uint64_t salt) const { return Rng(splitmix64(seed_ ^ splitmix64(salt))); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace swarmseg
