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

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dcp/matrix.hpp"

namespace dcp {

enum class Imbalance { uniform, zipf };

struct SynthConfig {
  uint32_t n_id = 1000;
  uint32_t d_in = 64;
  uint32_t k_min = 2;
  uint32_t k_max = 20;
  double noise_sigma = 0.1;
  uint32_t holdout_per_id = 2;
  uint64_t seed = 1;
  // Long-tail option: per-identity counts drawn from P(k) ~ k^-zipf_exponent
  // truncated to [k_min, k_max].
  Imbalance imbalance = Imbalance::uniform;
  double zipf_exponent = 1.0;

  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

// Synthetic identities: unit-norm inputs grouped contiguously by label.
struct Dataset {
  uint32_t n_id = 0;
  uint32_t d_in = 0;
  uint64_t seed = 0;
  uint32_t holdout_per_id = 0;
  Matrix inputs;                 // n_total x d_in
  std::vector<uint32_t> labels;  // n_total
  std::vector<std::vector<std::size_t>> per_identity_index;
  double k_bar = 0.0;

  std::size_t size() const { return labels.size(); }
  uint32_t k_min() const;
  uint32_t k_max() const;
};

// Train/held-out partition of a dataset. An identity holds out its last
// holdout_per_id samples only when at least one sample remains for training.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::vector<std::size_t>> train_by_id;
  std::vector<std::vector<std::size_t>> holdout_by_id;
};

struct PairSet {
  std::vector<std::pair<std::size_t, std::size_t>> genuine;
  std::vector<std::pair<std::size_t, std::size_t>> impostor;
};

Dataset generate(const SynthConfig& cfg);

// Rebuilds labels-derived fields (per_identity_index, k_bar).
void index_dataset(Dataset& ds);

Split split_holdout(const Dataset& ds);

// Genuine pairs come from within-identity held-out samples; impostor pairs
// from the first held-out sample of two distinct identities.
PairSet split_eval_pairs(const Dataset& ds, std::size_t n_genuine,
                         std::size_t n_impostor, uint64_t seed);

// "DCPD" binary format.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path, uint32_t holdout_per_id);
void export_csv(const Dataset& ds, const std::string& path);

}  // namespace dcp
