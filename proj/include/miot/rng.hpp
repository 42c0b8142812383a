#pragma once

#include <array>
#include <cstdint>
#include <random>

#include "miot/bytes.hpp"

namespace miot {

/// Deterministic RNG for a whole simulation run. All draws go through the
/// methods below (never through std:: distributions, whose output is
/// implementation-defined), so a (seed, draw sequence) pair pins every
/// random decision of a run.
class DetRng {
 public:
  explicit DetRng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// n bytes, 8 per underlying draw, most significant byte first.
  Bytes bytes(std::size_t n);

  std::array<std::uint8_t, 16> bytes16();

  /// Uniform in [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// True with probability p. p <= 0 never fires, p >= 1 always does.
  bool chance(double p) { return uniform01() < p; }

  /// Uniform index in [0, n). n must be > 0. Modulo draw; the bias at
  /// 64 bits is far below anything a simulation can observe.
  std::size_t pick(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace miot
