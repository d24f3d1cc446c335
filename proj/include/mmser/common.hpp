// Copyright 2026 The mmser Authors
// Shared error type, deterministic RNG, and small utilities.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mmser {

// Error carrying a short machine-parsable class token next to the human
// message. The CLI prints "error:<code>: <message>" and exits nonzero.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void raise(const char* code, const std::string& message) {
  throw Error(code, message);
}

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// xoshiro256++ seeded via splitmix64. Hand-rolled so that every draw is
// bit-reproducible across compilers and standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
    has_spare_ = false;
    spare_ = 0.0;
  }

  // Independent stream derived from (seed, stream index).
  static Rng stream(uint64_t seed, uint64_t stream_id) {
    uint64_t sm = seed;
    uint64_t a = splitmix64(sm);
    sm = a ^ (stream_id * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
    return Rng(splitmix64(sm));
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  uint64_t bounded(uint64_t n) {
    uint64_t x, r;
    do {
      x = next_u64();
      r = x % n;
    } while (x - r > UINT64_MAX - n + 1);
    return r;
  }

  // Standard normal via Box-Muller (pairwise, deterministic draw order).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Normal truncated to |z| <= 2, as used for weight init.
  double trunc_normal() {
    double z = normal();
    while (z < -2.0 || z > 2.0) z = normal();
    return z;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t s_[4];
  bool has_spare_;
  double spare_;
};

// FNV-1a, used for content-addressed caches and determinism checks.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

}  // namespace mmser
