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

namespace dcp {

struct LossOutput {
  double value = 0.0;
  // Gradient wrt the loss input (logits or features); row r belongs to batch
  // row rows[r] when rows is filled.
  Matrix grad;
  std::vector<std::size_t> rows;
  std::size_t count = 0;
  // cos_neg only: centers skipped for having zero norm.
  std::size_t skipped_centers = 0;
};

// Softmax cross-entropy against a classifier matrix W (n_id x D), logits
// W x_i. grad_weights covers only the rows listed in `classes`.
struct ClassifierLoss {
  double value = 0.0;
  std::vector<uint32_t> classes;
  Matrix grad_weights;  // classes.size() x D
  Matrix grad_inputs;   // N x D
};

ClassifierLoss softmax_ce_full(const Matrix& w, const Matrix& x,
                               std::span<const uint32_t> y);

// Dense n_id x D gradient of the full softmax loss wrt W.
Matrix softmax_ce_grad_W(const Matrix& w, const Matrix& x,
                         std::span<const uint32_t> y);

// Optimization-queue mask: exactly C active classes.
struct QueueMask {
  std::vector<uint8_t> active;    // n_id entries of 0/1
  std::vector<uint32_t> indices;  // active classes, ascending

  std::size_t active_count() const { return indices.size(); }
};

QueueMask select_queue(std::size_t n_id, std::size_t c,
                       std::span<const uint32_t> must_include, uint64_t seed);

// Softmax whose denominator runs over the active classes only. Every label
// must be active.
ClassifierLoss masked_softmax_ce(const Matrix& w, const QueueMask& mask,
                                 const Matrix& x, std::span<const uint32_t> y);

// Cross-entropy over pooled logits (I x C). grad is dL/dlogits. When
// `occupied` is non-empty, a target on an empty slot is rejected.
LossOutput pool_ce(const Matrix& logits, std::span<const std::size_t> slot_targets,
                   const std::vector<bool>& occupied = {});

enum class CosReduction { mean, max };

struct CosOptions {
  CosReduction reduction = CosReduction::mean;
  // Penalize only positive similarity.
  bool hinge = false;
};

// Mean over rows of the cosine similarity between each feature and the pool
// centers (mean or max over centers). Unoccupied or zero-norm centers are
// left out. grad is dL/dF.
LossOutput cos_neg(const Matrix& features, const Matrix& centers,
                   const std::vector<bool>& occupied = {}, CosOptions opts = {});

// ce.value + lambda * cos.value, gradients scattered into an n_rows x D
// matrix by each component's row indices.
LossOutput total_loss(const LossOutput& ce, const LossOutput& cos, double lambda,
                      std::size_t n_rows);

}  // namespace dcp
