#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace semq {

/// Counter-based pseudo-random stream: output i is a pure function of
/// (key, i), so independent streams can be consumed in any order or in
/// parallel and still reproduce bit-identically. The mixer is the SplitMix64
/// finalizer over a Weyl sequence, i.e. the i-th output equals the i-th draw
/// of SplitMix64 seeded with the key.
class CounterRng {
public:
  explicit CounterRng(std::uint64_t key) : key_(mix64(key)) {}

  static std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
  }

  /// Named sub-stream: hash of (seed, label, run_id). All randomness in a run
  /// derives from one top-level seed through calls of this form.
  static std::uint64_t derive_key(std::uint64_t seed, std::string_view label,
                                  std::uint64_t run_id = 0) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a over the label
    for (char c : label) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    return mix64(mix64(seed) ^ h ^ mix64(run_id * kGolden + 1));
  }

  std::uint64_t next() {
    ++counter_;
    return mix64(key_ + kGolden * counter_);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Uniform integer in [0, n) without modulo bias (Lemire reduction).
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  double uniform(double a, double b) { return a + uniform01() * (b - a); }

  /// Standard normal via Box-Muller (two draws per value, no cached state).
  double normal() {
    double u1 = uniform01();
    const double u2 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace semq
