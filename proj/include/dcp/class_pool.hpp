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
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dcp/matrix.hpp"

namespace dcp {

struct PoolPartition {
  std::vector<std::pair<std::size_t, std::size_t>> in_pool;  // (row, slot)
  std::vector<std::size_t> out_pool;
};

// Dynamic class pool: C slots of K unit-norm D-dim features, evicted FIFO
// over identity batches. A ring cursor replaces the array shift of the
// reference update; slots are ordered oldest-first starting at head().
class ClassPool {
 public:
  static constexpr int64_t kEmpty = -1;

  ClassPool(std::size_t capacity, std::size_t k, std::size_t dim, double scale,
            uint64_t seed);

  // feats holds B*K rows; row b*K + k is sub-slot k of ids[b]. Residents are
  // refreshed in place. New identities fill empty slots first, then evict
  // from head; a slot whose identity is in this batch is skipped over.
  void insert_batch(std::span<const uint32_t> ids, const Matrix& feats);

  // P[i, c] = scale * mean_k <probe_i, T[c, k]>; empty slots get
  // empty_logit().
  Matrix logits(const Matrix& probe) const;
  // dL/dprobe for upstream dL/dP with the pool treated as constant.
  Matrix logits_backward(const Matrix& grad_logits) const;

  Matrix mean_centers() const;
  PoolPartition partition(std::span<const uint32_t> labels) const;

  std::optional<std::size_t> slot_of(uint32_t id) const;
  int64_t slot_id(std::size_t slot) const { return slot_ids_[slot]; }
  bool occupied(std::size_t slot) const { return slot_ids_[slot] != kEmpty; }
  std::vector<bool> occupancy() const;

  std::span<const double> feature(std::size_t slot, std::size_t k) const {
    return {features_.data() + (slot * k_ + k) * dim_, dim_};
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t k() const { return k_; }
  std::size_t dim() const { return dim_; }
  double scale() const { return scale_; }
  std::size_t head() const { return head_; }
  std::size_t fill_count() const { return fill_count_; }
  double empty_logit() const { return -1e9 * scale_; }

  // C*K*D*8 feature bytes plus C*8 slot bookkeeping.
  std::size_t state_bytes() const;

  // "DCPT" snapshot.
  void save(const std::string& path) const;
  static ClassPool load(const std::string& path);

 private:
  ClassPool() = default;
  void write_slot(std::size_t slot, const Matrix& feats, std::size_t b);

  std::size_t capacity_ = 0;
  std::size_t k_ = 0;
  std::size_t dim_ = 0;
  double scale_ = 1.0;
  std::vector<double> features_;  // C x K x D
  std::vector<int64_t> slot_ids_;
  std::unordered_map<uint32_t, std::size_t> id_to_slot_;
  std::size_t head_ = 0;
  std::size_t fill_count_ = 0;
};

std::size_t pool_state_bytes(std::size_t capacity, std::size_t k, std::size_t dim);

}  // namespace dcp
