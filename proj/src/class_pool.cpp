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

#include "dcp/class_pool.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "dcp/detail/binary_io.hpp"
#include "dcp/errors.hpp"
#include "dcp/rng.hpp"

namespace dcp {

namespace {
constexpr uint32_t kPoolVersion = 1;
constexpr double kUnitTolerance = 1e-9;
}  // namespace

std::size_t pool_state_bytes(std::size_t capacity, std::size_t k, std::size_t dim) {
  return capacity * k * dim * sizeof(double) + capacity * sizeof(int64_t);
}

ClassPool::ClassPool(std::size_t capacity, std::size_t k, std::size_t dim,
                     double scale, uint64_t seed)
    : capacity_(capacity), k_(k), dim_(dim), scale_(scale) {
  if (capacity == 0 || k == 0 || dim == 0) {
    throw ConfigError("pool sizes C, K, D must be positive");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw ConfigError("pool logit scale must be positive");
  }
  features_.resize(capacity * k * dim);
  slot_ids_.assign(capacity, kEmpty);
  Rng rng(seed);
  for (std::size_t r = 0; r < capacity * k; ++r) {
    std::span<double> row(features_.data() + r * dim, dim);
    do {
      for (auto& v : row) v = rng.gaussian();
    } while (normalize(row) == 0.0);
  }
}

void ClassPool::write_slot(std::size_t slot, const Matrix& feats, std::size_t b) {
  for (std::size_t kk = 0; kk < k_; ++kk) {
    auto src = feats.row(b * k_ + kk);
    std::copy(src.begin(), src.end(), features_.begin() + (slot * k_ + kk) * dim_);
  }
}

void ClassPool::insert_batch(std::span<const uint32_t> ids, const Matrix& feats) {
  if (ids.size() > capacity_) {
    throw CapacityError("identity batch of " + std::to_string(ids.size()) +
                        " exceeds pool capacity " + std::to_string(capacity_));
  }
  if (feats.rows != ids.size() * k_ || feats.cols != dim_) {
    throw ShapeError("pool insert expects " + std::to_string(ids.size() * k_) +
                     "x" + std::to_string(dim_) + " features");
  }
  std::unordered_set<uint32_t> batch(ids.begin(), ids.end());
  if (batch.size() != ids.size()) {
    throw InputError("duplicate identity in pool insert batch");
  }
  for (std::size_t r = 0; r < feats.rows; ++r) {
    const double n = norm(feats.row(r));
    if (!(std::abs(n - 1.0) <= kUnitTolerance)) {
      throw InputError("pool feature row " + std::to_string(r) + " is not unit norm");
    }
  }

  for (std::size_t b = 0; b < ids.size(); ++b) {
    auto it = id_to_slot_.find(ids[b]);
    if (it != id_to_slot_.end()) write_slot(it->second, feats, b);
  }
  for (std::size_t b = 0; b < ids.size(); ++b) {
    if (id_to_slot_.count(ids[b])) continue;
    std::size_t slot;
    if (fill_count_ < capacity_) {
      slot = (head_ + fill_count_) % capacity_;
      ++fill_count_;
    } else {
      while (batch.count(static_cast<uint32_t>(slot_ids_[head_]))) {
        head_ = (head_ + 1) % capacity_;
      }
      slot = head_;
      id_to_slot_.erase(static_cast<uint32_t>(slot_ids_[slot]));
      head_ = (head_ + 1) % capacity_;
    }
    slot_ids_[slot] = ids[b];
    id_to_slot_[ids[b]] = slot;
    write_slot(slot, feats, b);
  }
}

Matrix ClassPool::mean_centers() const {
  Matrix out(capacity_, dim_);
  const double inv_k = 1.0 / static_cast<double>(k_);
  for (std::size_t c = 0; c < capacity_; ++c) {
    auto dst = out.row(c);
    for (std::size_t kk = 0; kk < k_; ++kk) axpy(1.0, feature(c, kk), dst);
    if (k_ > 1) {
      for (auto& v : dst) v *= inv_k;
    }
  }
  return out;
}

Matrix ClassPool::logits(const Matrix& probe) const {
  if (probe.cols != dim_) {
    throw ShapeError("probe dimension " + std::to_string(probe.cols) +
                     " does not match pool dimension " + std::to_string(dim_));
  }
  const Matrix centers = mean_centers();
  Matrix p(probe.rows, capacity_);
  parallel_rows(probe.rows, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      auto x = probe.row(i);
      auto out = p.row(i);
      for (std::size_t c = 0; c < capacity_; ++c) {
        out[c] = occupied(c) ? scale_ * dot(x, centers.row(c)) : empty_logit();
      }
    }
  });
  return p;
}

Matrix ClassPool::logits_backward(const Matrix& grad_logits) const {
  if (grad_logits.cols != capacity_) {
    throw ShapeError("logit gradient width does not match pool capacity");
  }
  const Matrix centers = mean_centers();
  Matrix d(grad_logits.rows, dim_);
  for (std::size_t i = 0; i < grad_logits.rows; ++i) {
    auto g = grad_logits.row(i);
    auto out = d.row(i);
    for (std::size_t c = 0; c < capacity_; ++c) {
      if (occupied(c) && g[c] != 0.0) axpy(scale_ * g[c], centers.row(c), out);
    }
  }
  return d;
}

PoolPartition ClassPool::partition(std::span<const uint32_t> labels) const {
  PoolPartition part;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = id_to_slot_.find(labels[i]);
    if (it != id_to_slot_.end()) {
      part.in_pool.emplace_back(i, it->second);
    } else {
      part.out_pool.push_back(i);
    }
  }
  return part;
}

std::optional<std::size_t> ClassPool::slot_of(uint32_t id) const {
  auto it = id_to_slot_.find(id);
  if (it == id_to_slot_.end()) return std::nullopt;
  return it->second;
}

std::vector<bool> ClassPool::occupancy() const {
  std::vector<bool> occ(capacity_);
  for (std::size_t c = 0; c < capacity_; ++c) occ[c] = occupied(c);
  return occ;
}

std::size_t ClassPool::state_bytes() const {
  return features_.size() * sizeof(double) + slot_ids_.size() * sizeof(int64_t);
}

void ClassPool::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PersistenceError("cannot open " + path + " for writing");
  binio::put_magic(os, "DCPT");
  binio::put<uint32_t>(os, kPoolVersion);
  binio::put<uint64_t>(os, capacity_);
  binio::put<uint64_t>(os, k_);
  binio::put<uint64_t>(os, dim_);
  binio::put<double>(os, scale_);
  binio::put<uint64_t>(os, head_);
  binio::put<uint64_t>(os, fill_count_);
  binio::put_all<int64_t>(os, slot_ids_);
  binio::put_all<double>(os, features_);
  if (!os) throw PersistenceError("write failed for " + path);
}

ClassPool ClassPool::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PersistenceError("cannot open " + path);
  binio::expect_magic(is, "DCPT");
  const auto version = binio::get<uint32_t>(is);
  if (version != kPoolVersion) {
    throw PersistenceError("unsupported pool version " + std::to_string(version));
  }
  ClassPool p;
  p.capacity_ = binio::get<uint64_t>(is);
  p.k_ = binio::get<uint64_t>(is);
  p.dim_ = binio::get<uint64_t>(is);
  p.scale_ = binio::get<double>(is);
  p.head_ = binio::get<uint64_t>(is);
  p.fill_count_ = binio::get<uint64_t>(is);
  p.slot_ids_.resize(p.capacity_);
  binio::get_all<int64_t>(is, p.slot_ids_);
  p.features_.resize(p.capacity_ * p.k_ * p.dim_);
  binio::get_all<double>(is, p.features_);
  for (std::size_t c = 0; c < p.capacity_; ++c) {
    if (p.slot_ids_[c] != kEmpty) {
      p.id_to_slot_[static_cast<uint32_t>(p.slot_ids_[c])] = c;
    }
  }
  return p;
}

}  // namespace dcp
