// Copyright 2026 The DCP Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace dcp {

uint64_t splitmix64(uint64_t& state);

// Derives an independent seed for a named consumer ("data", "init", ...)
// from one top-level seed.
uint64_t derive_seed(uint64_t root, std::string_view consumer);

// xoshiro256** with a Marsaglia polar Gaussian. Owned per consumer; there
// is no global generator.
class Rng {
 public:
  struct State {
    std::array<uint64_t, 4> s{};
    bool has_spare = false;
    double spare = 0.0;
  };

  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n). n must be positive.
  uint64_t below(uint64_t n);
  // Uniform integer in [lo, hi].
  uint64_t between(uint64_t lo, uint64_t hi);
  double gaussian();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  State state() const { return state_; }
  void restore(const State& st) { state_ = st; }

 private:
  State state_;
};

}  // namespace dcp
