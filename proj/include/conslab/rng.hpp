#pragma once

#include <cmath>
#include <cstdint>

namespace conslab {

// Counter-based pseudo-random generator built on the SplitMix64 finalizer.
//
// The i-th output of a stream with key k is mix64(k + (i+1)*GOLDEN), so a
// stream is a pure function of (key, counter): there is no hidden global
// state, streams can be replayed from any point, and results do not depend
// on evaluation order across threads.
//
// Stream splitting: derive_stream(k, i) produces an independent stream for
// work unit i (e.g. replication i of an experiment keyed by a master seed).
// The splitter is mix64(key ^ mix64(GOLDEN + i)), fixed and documented here
// so that experiment outputs are reproducible across versions and machines.
class CounterRng {
public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

  explicit CounterRng(std::uint64_t key) : key_(key), counter_(0) {}

  static std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  static CounterRng derive_stream(std::uint64_t key, std::uint64_t stream_index) {
    return CounterRng(mix64(key ^ mix64(kGolden + stream_index)));
  }

  CounterRng derive_stream(std::uint64_t stream_index) const {
    return derive_stream(key_, stream_index);
  }

  std::uint64_t next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a logarithm or power argument.
  double uniform01_open0() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; consumes exactly two outputs per call.
  double normal() {
    const double u1 = uniform01_open0();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Beta(1, c) by inverse CDF: V = 1 - U^{1/c}.
  double beta_one(double concentration) {
    return 1.0 - std::pow(uniform01_open0(), 1.0 / concentration);
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace conslab
