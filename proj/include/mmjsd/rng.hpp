#pragma once

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <cstdint>
#include <limits>
#include <span>

namespace mmjsd {

/// splitmix64 finalizer; used for seeding and for deriving per-index streams.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stream seed for item `index` of a run seeded with `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// xoshiro256++ engine. Satisfies UniformRandomBitGenerator, so it plugs into
/// the boost.random distributions, whose output is identical on every platform.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept { reseed(seed); }

  void reseed(std::uint64_t seed) noexcept {
    std::uint64_t x = seed;
    for (auto& s : state_) {
      x += 0x9e3779b97f4a7c15ULL;
      s = splitmix64(x);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  double normal() { return normal_(*this); }
  double uniform() { return boost::random::uniform_01<double>{}(*this); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) { return boost::random::uniform_int_distribution<int>(lo, hi)(*this); }

  /// Bulk path; flattened so the sampler stays inlined in large translation units.
  template <class T>
  [[gnu::flatten]] void fill_normal(std::span<T> out) {
    for (auto& v : out) v = static_cast<T>(normal_(*this));
  }

  /// Independent child stream; advances this generator by one draw.
  Rng split() { return Rng{(*this)()}; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4]{};
  boost::random::normal_distribution<double> normal_{};
};

}  // namespace mmjsd
