// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "unirender/common.hpp"

namespace unirender {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is identified by a 64-bit key and a 64-bit stream id; the
/// remaining 64 counter bits index blocks within the stream. Any sample can
/// be reproduced from (key, stream, index) alone, which keeps dataset
/// generation and training independent of evaluation order.
class Philox4x32 {
 public:
  using Block = std::array<uint32_t, 4>;

  static Block Generate(uint64_t key, uint64_t stream, uint64_t index) {
    Block ctr{static_cast<uint32_t>(index), static_cast<uint32_t>(index >> 32),
              static_cast<uint32_t>(stream), static_cast<uint32_t>(stream >> 32)};
    uint32_t k0 = static_cast<uint32_t>(key);
    uint32_t k1 = static_cast<uint32_t>(key >> 32);
    for (int round = 0; round < 10; ++round) {
      const uint64_t p0 = uint64_t{kM0} * ctr[0];
      const uint64_t p1 = uint64_t{kM1} * ctr[2];
      ctr = {static_cast<uint32_t>(p1 >> 32) ^ ctr[1] ^ k0, static_cast<uint32_t>(p1),
             static_cast<uint32_t>(p0 >> 32) ^ ctr[3] ^ k1, static_cast<uint32_t>(p0)};
      k0 += kW0;
      k1 += kW1;
    }
    return ctr;
  }

 private:
  static constexpr uint32_t kM0 = 0xD2511F53u;
  static constexpr uint32_t kM1 = 0xCD9E8D57u;
  static constexpr uint32_t kW0 = 0x9E3779B9u;
  static constexpr uint32_t kW1 = 0xBB67AE85u;
};

/// SplitMix64 finalizer; used to fold structured ids into seeds.
constexpr uint64_t Mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Derives a child seed from a parent seed and a sequence of ids.
constexpr uint64_t DeriveSeed(uint64_t seed, std::initializer_list<uint64_t> ids) {
  uint64_t h = Mix64(seed);
  for (uint64_t id : ids) h = Mix64(h ^ Mix64(id + 0x632BE59BD9B4E019ull));
  return h;
}

/// Sequential view over one Philox stream. Cheap to copy; copies continue
/// independently from the same position.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0) : key_(seed), stream_(stream) {}

  uint64_t seed() const { return key_; }
  uint64_t stream() const { return stream_; }

  uint32_t NextU32() {
    if (lane_ == 4) {
      block_ = Philox4x32::Generate(key_, stream_, index_++);
      lane_ = 0;
    }
    return block_[lane_++];
  }

  uint64_t NextU64() {
    const uint64_t hi = NextU32();
    return (hi << 32) | NextU32();
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(NextU64() >> 11) * 0x1.0p-53; }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  /// Uniform integer in [lo, hi] (inclusive), bias-free via rejection.
  int64_t UniformInt(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(NextU64());
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t v;
    do {
      v = NextU64();
    } while (v >= limit);
    return lo + static_cast<int64_t>(v % span);
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  /// Standard normal via Box-Muller; both variates of a pair are used.
  double Normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = Uniform();
    } while (u1 <= 0.0);
    const double u2 = Uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return radius * std::cos(2.0 * kPi * u2);
  }

  /// Child generator for a named sub-stream; does not advance this one.
  Rng Fork(uint64_t id) const { return Rng(DeriveSeed(key_, {stream_, id}), 0); }

 private:
  uint64_t key_;
  uint64_t stream_;
  uint64_t index_ = 0;
  Philox4x32::Block block_{};
  int lane_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace unirender
