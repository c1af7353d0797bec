// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dmos {

enum class ErrorKind {
  // data
  MissingFile,
  MalformedRow,
  DuplicateId,
  InvalidCount,
  EmptyBatch,
  TooShortInput,
  InsufficientData,
  CorruptFile,
  TargetOutOfRange,
  AllFramesMasked,
  DegenerateInput,
  // config
  DimMismatch,
  ShapeMismatch,
  WrongHeadMode,
  MissingCodebooks,
  MissingLayerCodebook,
  StepOutOfRange,
  IncompatibleCheckpoint,
  BadConfig,
  // numerical
  NonFiniteInput,
  NonFiniteLoss,
  RankDeficient,
};

class DmosError : public std::runtime_error {
public:
  DmosError(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

const char* error_kind_name(ErrorKind kind);

// CLI contract: 0 success, 2 config error, 3 data error, 4 numerical failure.
int exit_code_for(ErrorKind kind);

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw DmosError(kind, msg);
}

#define DMOS_CHECK(cond, kind, msg)            \
  do {                                         \
    if (!(cond)) ::dmos::fail((kind), (msg));  \
  } while (0)

// Deterministic RNG used everywhere instead of <random> distributions so that
// seeds reproduce bit-identically across platforms and standard libraries.
// splitmix64 core, Box-Muller normals without a cached spare (single u64 state).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  std::uint64_t below(std::uint64_t n) { return n ? next() % n : 0; }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

  // Stable derivation of independent substreams (per utterance, per layer, ...).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
    Rng r(seed ^ (0x632be59bd9b4e019ull * (salt + 1)));
    return r.next();
  }

private:
  std::uint64_t state_;
};

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string to_hex(std::uint64_t v);

}  // namespace dmos
