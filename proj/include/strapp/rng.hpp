#ifndef STRAPP_RNG_HPP
#define STRAPP_RNG_HPP

#include <cmath>
#include <cstdint>

namespace strapp {

/// Deterministic random stream keyed by (seed, stream_id).
///
/// xoshiro256++ seeded through splitmix64 so that distinct stream ids under
/// the same seed give statistically independent sequences. All sampling
/// (uniform, normal, poisson, ...) is implemented locally rather than via
/// <random> distributions, whose output is implementation-defined; chains
/// produced with the same (seed, stream_id) are bit-identical everywhere.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}

  RngStream(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t x = seed;
    // Fold the stream id into the splitmix sequence before drawing state.
    x += 0x9e3779b97f4a7c15ULL * (stream_id + 1);
    for (auto& word : state_) word = splitmix64(x);
    has_spare_normal_ = false;
  }

  std::uint64_t next_u64() {
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

  /// Uniform on (0, 1].
  double uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (second deviate cached).
  double normal() {
    if (has_spare_normal_) {
      has_spare_normal_ = false;
      return spare_normal_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_normal_ = radius * std::sin(angle);
    has_spare_normal_ = true;
    return radius * std::cos(angle);
  }

  bool bernoulli(double p) { return uniform() <= p; }

  /// Poisson count by Knuth's product method; fine for the small means used
  /// in the simulation scenarios.
  long poisson(double mean) {
    const double limit = std::exp(-mean);
    long k = 0;
    double prod = uniform();
    while (prod > limit) {
      ++k;
      prod *= uniform();
    }
    return k;
  }

  /// Exponential with the given mean.
  double exponential(double mean) { return -mean * std::log(uniform()); }

 private:
  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_[4];
  double spare_normal_ = 0.0;
  bool has_spare_normal_ = false;
};

}  // namespace strapp

#endif  // STRAPP_RNG_HPP
