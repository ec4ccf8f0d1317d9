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
#include <span>
#include <vector>

#include "dcp/matrix.hpp"
#include "dcp/rng.hpp"
#include "dcp/synth_data.hpp"

namespace dcp {

// Serializable iterator position shared by both loaders.
struct LoaderState {
  std::vector<std::size_t> permutation;
  std::size_t cursor = 0;
  uint64_t epoch = 0;
  Rng::State rng;
};

// Yields sample indices uniformly without replacement, reshuffling at wrap.
class InstanceLoader {
 public:
  InstanceLoader(std::vector<std::size_t> samples, uint64_t seed);

  std::vector<std::size_t> next(std::size_t b);

  std::size_t size() const { return perm_.size(); }
  uint64_t epoch() const { return epoch_; }
  LoaderState state() const;
  void restore(const LoaderState& st);

 private:
  std::vector<std::size_t> perm_;
  std::size_t cursor_ = 0;
  uint64_t epoch_ = 0;
  Rng rng_;
};

struct IdentityBatch {
  std::vector<uint32_t> ids;
  std::vector<std::vector<std::size_t>> samples;  // images_per_identity each
};

// Yields identities without replacement per identity-epoch, then draws
// images_per_identity samples of each (with replacement only when the
// identity has fewer images than requested).
class IdentityLoader {
 public:
  IdentityLoader(std::vector<std::vector<std::size_t>> by_identity,
                 std::size_t images_per_identity, uint64_t seed);

  IdentityBatch next(std::size_t b_id);

  std::size_t n_id() const { return by_id_.size(); }
  std::size_t images_per_identity() const { return per_id_; }
  std::size_t batches_per_epoch(std::size_t b_id) const {
    return (by_id_.size() + b_id - 1) / b_id;
  }
  uint64_t epoch() const { return epoch_; }
  LoaderState state() const;
  void restore(const LoaderState& st);

 private:
  void reshuffle_avoiding(const std::vector<uint32_t>& taken, std::size_t need);

  std::vector<std::vector<std::size_t>> by_id_;
  std::size_t per_id_;
  std::vector<std::size_t> perm_;
  std::size_t cursor_ = 0;
  uint64_t epoch_ = 0;
  Rng rng_;
};

enum class BatchMode {
  paper_literal,  // 2 images per identity: probe + one gallery image
  k_fill,         // K+1 images per identity: probe + K gallery images
};

std::size_t images_per_identity(BatchMode mode, std::size_t k);

enum class RowOrigin : uint8_t { instance, identity };

struct MixedBatch {
  Matrix probe_inputs;  // I then III
  std::vector<uint32_t> probe_labels;
  std::vector<RowOrigin> probe_origin;
  Matrix gallery_inputs;  // II then IV
  std::vector<uint32_t> gallery_labels;
  std::vector<RowOrigin> gallery_origin;
  std::vector<uint32_t> batch_identities;
  // For each batch identity, the K gallery rows feeding its pool slot. In
  // paper-literal mode all K entries name the same row.
  std::vector<std::vector<std::size_t>> gallery_layout;
  std::size_t k = 0;

  std::size_t instance_half() const;
};

MixedBatch assemble(std::span<const std::size_t> inst_indices,
                    const IdentityBatch& id_batch, BatchMode mode,
                    std::size_t k, const Dataset& ds);

}  // namespace dcp
