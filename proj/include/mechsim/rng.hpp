// Copyright 2026 The mechsim Authors
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

#include <cstdint>

namespace mechsim {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Counter-based generator ("mechsim-ctr-v1"). Every draw is a pure function
/// of (seed, round, slot, stream), so fixtures do not depend on call order or
/// on any standard-library engine.
///
/// Changing the mixing below changes every stored fixture; bump the version
/// string when doing so.
class CounterRng {
 public:
  static constexpr const char* kVersion = "mechsim-ctr-v1";

  enum Stream : std::uint64_t { kTransition = 1, kWorld = 2 };

  constexpr explicit CounterRng(std::uint64_t seed) : key_(splitmix64(seed)) {}

  /// Independent generator for a sub-experiment (e.g. one Monte-Carlo episode).
  constexpr CounterRng substream(std::uint64_t key) const {
    CounterRng r(0);
    r.key_ = splitmix64(key_ ^ splitmix64(key + 0x632BE59BD9B4E019ull));
    return r;
  }

  constexpr std::uint64_t bits(std::uint64_t round, std::uint64_t slot, std::uint64_t stream) const {
    std::uint64_t h = key_;
    h = splitmix64(h ^ splitmix64(round));
    h = splitmix64(h ^ splitmix64(slot + 0x5851F42D4C957F2Dull));
    h = splitmix64(h ^ splitmix64(stream + 0x14057B7EF767814Full));
    return h;
  }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double uniform(std::uint64_t round, std::uint64_t slot, std::uint64_t stream) const {
    return static_cast<double>(bits(round, slot, stream) >> 11) * 0x1.0p-53;
  }

  constexpr std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
};

}  // namespace mechsim
