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

#include "dcp/loaders.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "dcp/errors.hpp"

namespace dcp {

InstanceLoader::InstanceLoader(std::vector<std::size_t> samples, uint64_t seed)
    : perm_(std::move(samples)), rng_(seed) {
  rng_.shuffle(std::span<std::size_t>(perm_));
}

std::vector<std::size_t> InstanceLoader::next(std::size_t b) {
  if (b > perm_.size()) {
    throw ConfigError("instance batch " + std::to_string(b) +
                      " exceeds sample count " + std::to_string(perm_.size()));
  }
  std::vector<std::size_t> out;
  out.reserve(b);
  while (out.size() < b) {
    if (cursor_ == perm_.size()) {
      rng_.shuffle(std::span<std::size_t>(perm_));
      cursor_ = 0;
      ++epoch_;
    }
    out.push_back(perm_[cursor_++]);
  }
  return out;
}

LoaderState InstanceLoader::state() const {
  return {perm_, cursor_, epoch_, rng_.state()};
}

void InstanceLoader::restore(const LoaderState& st) {
  if (st.permutation.size() != perm_.size() || st.cursor > perm_.size()) {
    throw InputError("loader state does not match this loader");
  }
  perm_ = st.permutation;
  cursor_ = st.cursor;
  epoch_ = st.epoch;
  rng_.restore(st.rng);
}

IdentityLoader::IdentityLoader(std::vector<std::vector<std::size_t>> by_identity,
                               std::size_t images_per_identity, uint64_t seed)
    : by_id_(std::move(by_identity)), per_id_(images_per_identity), rng_(seed) {
  if (per_id_ == 0) throw ConfigError("images_per_identity must be positive");
  for (std::size_t c = 0; c < by_id_.size(); ++c) {
    if (by_id_[c].empty()) {
      throw InputError("identity " + std::to_string(c) + " has no samples");
    }
  }
  perm_.resize(by_id_.size());
  std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  rng_.shuffle(std::span<std::size_t>(perm_));
}

void IdentityLoader::reshuffle_avoiding(const std::vector<uint32_t>& taken,
                                        std::size_t need) {
  rng_.shuffle(std::span<std::size_t>(perm_));
  if (taken.empty()) return;
  // Identities already in the current batch are moved out of the prefix
  // that completes it, so a batch never repeats an identity.
  auto is_taken = [&taken](std::size_t id) {
    return std::find(taken.begin(), taken.end(), id) != taken.end();
  };
  std::size_t scan = need;
  for (std::size_t j = 0; j < need; ++j) {
    if (!is_taken(perm_[j])) continue;
    while (is_taken(perm_[scan])) ++scan;
    std::swap(perm_[j], perm_[scan]);
    ++scan;
  }
}

IdentityBatch IdentityLoader::next(std::size_t b_id) {
  if (b_id > by_id_.size()) {
    throw ConfigError("identity batch " + std::to_string(b_id) +
                      " exceeds identity count " + std::to_string(by_id_.size()));
  }
  IdentityBatch out;
  out.ids.reserve(b_id);
  out.samples.reserve(b_id);
  while (out.ids.size() < b_id) {
    if (cursor_ == perm_.size()) {
      reshuffle_avoiding(out.ids, b_id - out.ids.size());
      cursor_ = 0;
      ++epoch_;
    }
    out.ids.push_back(static_cast<uint32_t>(perm_[cursor_++]));
  }
  for (uint32_t id : out.ids) {
    const auto& pool = by_id_[id];
    std::vector<std::size_t> draw;
    draw.reserve(per_id_);
    if (pool.size() >= per_id_) {
      std::vector<std::size_t> tmp = pool;
      for (std::size_t j = 0; j < per_id_; ++j) {
        const std::size_t pick = j + static_cast<std::size_t>(rng_.below(tmp.size() - j));
        std::swap(tmp[j], tmp[pick]);
        draw.push_back(tmp[j]);
      }
    } else {
      for (std::size_t j = 0; j < per_id_; ++j) {
        draw.push_back(pool[rng_.below(pool.size())]);
      }
    }
    out.samples.push_back(std::move(draw));
  }
  return out;
}

LoaderState IdentityLoader::state() const {
  return {perm_, cursor_, epoch_, rng_.state()};
}

void IdentityLoader::restore(const LoaderState& st) {
  if (st.permutation.size() != perm_.size() || st.cursor > perm_.size()) {
    throw InputError("loader state does not match this loader");
  }
  perm_ = st.permutation;
  cursor_ = st.cursor;
  epoch_ = st.epoch;
  rng_.restore(st.rng);
}

std::size_t images_per_identity(BatchMode mode, std::size_t k) {
  return mode == BatchMode::paper_literal ? 2 : k + 1;
}

std::size_t MixedBatch::instance_half() const {
  return static_cast<std::size_t>(
      std::count(probe_origin.begin(), probe_origin.end(), RowOrigin::instance));
}

MixedBatch assemble(std::span<const std::size_t> inst_indices,
                    const IdentityBatch& id_batch, BatchMode mode,
                    std::size_t k, const Dataset& ds) {
  if (inst_indices.size() % 2 != 0) {
    throw AssemblyError("instance batch size must be even, got " +
                        std::to_string(inst_indices.size()));
  }
  if (k == 0) throw AssemblyError("K must be positive");
  const std::size_t per_id = images_per_identity(mode, k);
  if (id_batch.samples.size() != id_batch.ids.size()) {
    throw AssemblyError("identity batch is missing sample lists");
  }
  for (const auto& s : id_batch.samples) {
    if (s.size() != per_id) {
      throw AssemblyError("identity batch carries " + std::to_string(s.size()) +
                          " images per identity, mode needs " +
                          std::to_string(per_id));
    }
  }

  const std::size_t half = inst_indices.size() / 2;
  const std::size_t b_id = id_batch.ids.size();
  const std::size_t gallery_per_id = per_id - 1;

  std::vector<std::size_t> probe_rows;
  std::vector<std::size_t> gallery_rows;
  probe_rows.reserve(half + b_id);
  gallery_rows.reserve(half + b_id * gallery_per_id);

  MixedBatch mb;
  mb.k = k;
  for (std::size_t i = 0; i < half; ++i) {
    probe_rows.push_back(inst_indices[i]);
    mb.probe_origin.push_back(RowOrigin::instance);
    gallery_rows.push_back(inst_indices[half + i]);
    mb.gallery_origin.push_back(RowOrigin::instance);
  }
  mb.batch_identities = id_batch.ids;
  mb.gallery_layout.resize(b_id);
  for (std::size_t b = 0; b < b_id; ++b) {
    const auto& s = id_batch.samples[b];
    probe_rows.push_back(s[0]);
    mb.probe_origin.push_back(RowOrigin::identity);
    for (std::size_t j = 1; j < per_id; ++j) {
      gallery_rows.push_back(s[j]);
      mb.gallery_origin.push_back(RowOrigin::identity);
    }
    auto& layout = mb.gallery_layout[b];
    const std::size_t first = gallery_rows.size() - gallery_per_id;
    for (std::size_t kk = 0; kk < k; ++kk) {
      layout.push_back(first + (kk % gallery_per_id));
    }
  }

  mb.probe_inputs = gather_rows(ds.inputs, probe_rows);
  mb.gallery_inputs = gather_rows(ds.inputs, gallery_rows);
  for (std::size_t r : probe_rows) mb.probe_labels.push_back(ds.labels[r]);
  for (std::size_t r : gallery_rows) mb.gallery_labels.push_back(ds.labels[r]);
  for (std::size_t b = 0; b < b_id; ++b) {
    if (mb.probe_labels[half + b] != id_batch.ids[b]) {
      throw AssemblyError("identity batch sample does not carry its identity label");
    }
  }
  return mb;
}

}  // namespace dcp
