// Copyright 2026 The matchlearn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace matchlearn {

inline constexpr const char* kVersion = "0.1.0";

/// Strictly increasing list of 1-based Majorana indices, a subset of [2n].
using IndexSet = std::vector<int>;

/// Bitmask form of an IndexSet: bit (mu - 1) is set iff mu is in the set.
using ModeMask = std::uint64_t;

/// Largest supported mode count; index sets must fit in a 64-bit mask.
inline constexpr int kMaxModes = 32;

using Rng = std::mt19937_64;

// Error types. Everything derives from std::runtime_error or
// std::invalid_argument so callers can catch broadly.

struct BranchAmbiguityError : std::domain_error {
  using std::domain_error::domain_error;
};

struct NotGaussianError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InconsistentActionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SizeLimitError : std::length_error {
  using std::length_error::length_error;
};

struct RankDeficiencyError : std::domain_error {
  using std::domain_error::domain_error;
};

struct DegenerateEstimateError : std::domain_error {
  using std::domain_error::domain_error;
};

struct InternalConsistencyError : std::logic_error {
  using std::logic_error::logic_error;
};

inline ModeMask mask_of(const IndexSet& set) {
  ModeMask m = 0;
  for (int mu : set) m |= ModeMask{1} << (mu - 1);
  return m;
}

inline IndexSet set_of(ModeMask mask) {
  IndexSet out;
  out.reserve(static_cast<std::size_t>(std::popcount(mask)));
  while (mask != 0) {
    out.push_back(std::countr_zero(mask) + 1);
    mask &= mask - 1;
  }
  return out;
}

/// Mask with the low `bits` bits set; valid for bits in [0, 64].
inline constexpr ModeMask low_bits(int bits) {
  return bits >= 64 ? ~ModeMask{0} : (ModeMask{1} << bits) - 1;
}

inline bool contains(const IndexSet& set, int mu) {
  for (int x : set)
    if (x == mu) return true;
  return false;
}

/// Validates an index set against [1, 2n]; throws std::invalid_argument.
inline void check_index_set(const IndexSet& set, int n_modes) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set[i] < 1 || set[i] > 2 * n_modes)
      throw std::invalid_argument("index " + std::to_string(set[i]) +
                                  " outside [1, " +
                                  std::to_string(2 * n_modes) + "]");
    if (i > 0 && set[i] <= set[i - 1])
      throw std::invalid_argument("index set must be strictly increasing");
  }
}

inline void check_mode_count(int n_modes) {
  if (n_modes < 1 || n_modes > kMaxModes)
    throw std::invalid_argument("mode count " + std::to_string(n_modes) +
                                " outside [1, " + std::to_string(kMaxModes) +
                                "]");
}

// Counter-based seed split (splitmix64 finalizer). Child seeds depend only on
// (master, index), so parallel or reordered trials reproduce exactly.
inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Dense-simulation qubit limit; MATCHLEARN_DENSE_LIMIT overrides the default 6.
inline int dense_limit() {
  if (const char* env = std::getenv("MATCHLEARN_DENSE_LIMIT")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1 && v <= 12) return static_cast<int>(v);
  }
  return 6;
}

inline void require_dense(int n_qubits) {
  if (n_qubits > dense_limit())
    throw SizeLimitError("dense simulation limited to " +
                         std::to_string(dense_limit()) + " qubits, got " +
                         std::to_string(n_qubits));
}

}  // namespace matchlearn
