#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace mmfuse {

// Stream ids derived from a run seed. Distinct streams never share draws, so
// changing the dropout rate cannot perturb batch order or initialization.
enum class Stream : std::uint64_t {
  init = 1,
  shuffle = 2,
  dropout = 3,
  synth = 4,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/**
 * Counter-based generator: draw i of (seed, stream) is a pure function of
 * (seed, stream, i), so any position in the stream is reproducible without
 * replaying earlier draws.
 */
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0) noexcept
      : key_(splitmix64(splitmix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL))), counter_(counter) {}
  CounterRng(std::uint64_t seed, Stream stream, std::uint64_t counter = 0) noexcept
      : CounterRng(seed, static_cast<std::uint64_t>(stream), counter) {}

  std::uint64_t at(std::uint64_t counter) const noexcept {
    return splitmix64(key_ ^ splitmix64(counter + 0x632be59bd9b4e019ULL));
  }

  std::uint64_t next_u64() noexcept { return at(counter_++); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

  // Box-Muller; consumes two draws per call.
  double normal(double mean = 0.0, double stdev = 1.0) noexcept {
    double u1 = uniform01();
    const double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stdev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) noexcept { return uniform01() < p; }

  // Uniform integer in [0, n), rejection sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

template <typename T>
void shuffle_in_place(std::vector<T>& v, CounterRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace mmfuse
