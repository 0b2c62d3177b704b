#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace hierwalk {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_str(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent substream seed from a base seed and a key path.
/// Substreams let walk sampling, init, shuffling etc. stay reproducible and
/// independent of scheduling order.
inline std::uint64_t mix_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t k : keys) h = splitmix64(h ^ k);
  return h;
}

/// splitmix64 as a UniformRandomBitGenerator: cheap to seed (walk sampling
/// constructs one generator per walk) and statistically solid for this use.
struct SplitMix64Engine {
  using result_type = std::uint64_t;
  std::uint64_t state = 0;

  explicit SplitMix64Engine(std::uint64_t seed) : state(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~0ULL; }
  result_type operator()() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
};

/// Seeded generator with explicitly defined uniform mappings, so results are
/// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1).
  double next_double() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1); safe as a log argument.
  double next_open() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }

  /// Uniform index in [0, n).
  int next_index(int n) {
    int i = static_cast<int>(next_double() * n);
    return i < n ? i : n - 1;
  }

  double next_gumbel() { return -std::log(-std::log(next_open())); }

  SplitMix64Engine& engine() { return eng_; }

 private:
  SplitMix64Engine eng_;
};

}  // namespace hierwalk
