#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace platoonctl {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Named substreams of a run seed. Each consumer draws from its own stream so
/// the draws of one never shift another.
enum class Stream : std::uint64_t { demand = 1, platoons = 2, analysis = 3 };

/// mt19937_64 wrapper with library-independent uniform and exponential draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}
  Rng(std::uint64_t seed, Stream s)
      : engine_(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(s) * 0x632be59bd9b4e019ULL))) {}

  /// Uniform on [0, 1).
  double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double exponential(double rate) noexcept { return -std::log1p(-uniform()) / rate; }

 private:
  std::mt19937_64 engine_;
};

/// Seed of run i under a master seed.
constexpr std::uint64_t run_seed(std::uint64_t master, std::uint64_t i) noexcept {
  return master ^ splitmix64(i);
}

}  // namespace platoonctl
