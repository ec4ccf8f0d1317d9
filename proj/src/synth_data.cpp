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

#include "dcp/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <unordered_set>

#include "dcp/detail/binary_io.hpp"
#include "dcp/errors.hpp"
#include "dcp/rng.hpp"

namespace dcp {

namespace {

constexpr uint32_t kDatasetVersion = 1;

void unit_gaussian(Rng& rng, std::span<double> v) {
  do {
    for (auto& x : v) x = rng.gaussian();
  } while (normalize(v) == 0.0);
}

uint32_t draw_count(const SynthConfig& cfg, Rng& rng,
                    const std::vector<double>& zipf_cdf) {
  if (cfg.imbalance == Imbalance::uniform) {
    return static_cast<uint32_t>(rng.between(cfg.k_min, cfg.k_max));
  }
  const double u = rng.uniform();
  auto it = std::upper_bound(zipf_cdf.begin(), zipf_cdf.end(), u);
  auto off = std::min<std::size_t>(it - zipf_cdf.begin(), zipf_cdf.size() - 1);
  return cfg.k_min + static_cast<uint32_t>(off);
}

// Floyd's algorithm: k distinct values from [0, n), in draw order.
std::vector<uint64_t> sample_distinct(uint64_t n, uint64_t k, Rng& rng) {
  std::vector<uint64_t> out;
  out.reserve(k);
  std::unordered_set<uint64_t> seen;
  seen.reserve(k * 2);
  for (uint64_t j = n - k; j < n; ++j) {
    const uint64_t t = rng.below(j + 1);
    const uint64_t pick = seen.count(t) ? j : t;
    seen.insert(pick);
    out.push_back(pick);
  }
  return out;
}

// Index t over the pairs (a < b) of m items in row-major order.
std::pair<uint64_t, uint64_t> decode_pair(uint64_t m, uint64_t t) {
  auto row_start = [m](uint64_t a) { return a * (2 * m - a - 1) / 2; };
  const double mm = static_cast<double>(2 * m - 1);
  double est = (mm - std::sqrt(mm * mm - 8.0 * static_cast<double>(t))) / 2.0;
  uint64_t a = est > 0 ? static_cast<uint64_t>(est) : 0;
  if (a > m - 2) a = m - 2;
  while (a > 0 && row_start(a) > t) --a;
  while (a + 1 <= m - 2 && row_start(a + 1) <= t) ++a;
  const uint64_t b = a + 1 + (t - row_start(a));
  return {a, b};
}

}  // namespace

void SynthConfig::validate() const {
  std::string err;
  if (n_id == 0) err += "n_id must be positive; ";
  if (d_in < 2) err += "d_in must be >= 2; ";
  if (k_min < 1) err += "k_min must be >= 1; ";
  if (k_min > k_max) err += "k_min must not exceed k_max; ";
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    err += "noise_sigma must be finite and nonnegative; ";
  }
  if (imbalance == Imbalance::zipf && !(zipf_exponent > 0.0)) {
    err += "zipf_exponent must be positive; ";
  }
  if (!err.empty()) throw ConfigError("invalid synth config: " + err);
}

uint32_t Dataset::k_min() const {
  std::size_t m = SIZE_MAX;
  for (const auto& ids : per_identity_index) m = std::min(m, ids.size());
  return per_identity_index.empty() ? 0 : static_cast<uint32_t>(m);
}

uint32_t Dataset::k_max() const {
  std::size_t m = 0;
  for (const auto& ids : per_identity_index) m = std::max(m, ids.size());
  return static_cast<uint32_t>(m);
}

Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  Matrix centers(cfg.n_id, cfg.d_in);
  for (uint32_t c = 0; c < cfg.n_id; ++c) unit_gaussian(rng, centers.row(c));

  std::vector<double> zipf_cdf;
  if (cfg.imbalance == Imbalance::zipf) {
    double total = 0.0;
    for (uint32_t k = cfg.k_min; k <= cfg.k_max; ++k) {
      total += std::pow(static_cast<double>(k), -cfg.zipf_exponent);
      zipf_cdf.push_back(total);
    }
    for (auto& v : zipf_cdf) v /= total;
  }

  std::vector<uint32_t> counts(cfg.n_id);
  std::size_t n_total = 0;
  for (auto& k : counts) {
    k = draw_count(cfg, rng, zipf_cdf);
    n_total += k;
  }

  Dataset ds;
  ds.n_id = cfg.n_id;
  ds.d_in = cfg.d_in;
  ds.seed = cfg.seed;
  ds.holdout_per_id = cfg.holdout_per_id;
  ds.inputs = Matrix(n_total, cfg.d_in);
  ds.labels.resize(n_total);

  std::size_t r = 0;
  for (uint32_t c = 0; c < cfg.n_id; ++c) {
    auto center = centers.row(c);
    for (uint32_t j = 0; j < counts[c]; ++j, ++r) {
      ds.labels[r] = c;
      auto x = ds.inputs.row(r);
      for (uint32_t d = 0; d < cfg.d_in; ++d) {
        x[d] = center[d] + cfg.noise_sigma * rng.gaussian();
      }
      if (cfg.noise_sigma == 0.0) {
        std::copy(center.begin(), center.end(), x.begin());
      } else if (normalize(x) == 0.0) {
        std::copy(center.begin(), center.end(), x.begin());
      }
    }
  }
  index_dataset(ds);
  return ds;
}

void index_dataset(Dataset& ds) {
  ds.per_identity_index.assign(ds.n_id, {});
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i] >= ds.n_id) {
      throw InputError("label " + std::to_string(ds.labels[i]) +
                       " out of range at sample " + std::to_string(i));
    }
    ds.per_identity_index[ds.labels[i]].push_back(i);
  }
  ds.k_bar = ds.n_id == 0 ? 0.0
                          : static_cast<double>(ds.labels.size()) /
                                static_cast<double>(ds.n_id);
}

Split split_holdout(const Dataset& ds) {
  Split sp;
  sp.train_by_id.resize(ds.n_id);
  sp.holdout_by_id.resize(ds.n_id);
  const std::size_t h = ds.holdout_per_id;
  for (uint32_t c = 0; c < ds.n_id; ++c) {
    const auto& idx = ds.per_identity_index[c];
    const std::size_t keep = (h > 0 && idx.size() > h) ? idx.size() - h : idx.size();
    sp.train_by_id[c].assign(idx.begin(), idx.begin() + keep);
    sp.holdout_by_id[c].assign(idx.begin() + keep, idx.end());
    sp.train.insert(sp.train.end(), idx.begin(), idx.begin() + keep);
  }
  return sp;
}

PairSet split_eval_pairs(const Dataset& ds, std::size_t n_genuine,
                         std::size_t n_impostor, uint64_t seed) {
  const Split sp = split_holdout(ds);
  Rng rng(seed);
  PairSet out;

  if (n_genuine > 0) {
    if (ds.holdout_per_id < 2) {
      throw PairingError("genuine pairs need holdout_per_id >= 2");
    }
    std::vector<uint64_t> prefix{0};
    std::vector<uint32_t> owners;
    for (uint32_t c = 0; c < ds.n_id; ++c) {
      const uint64_t h = sp.holdout_by_id[c].size();
      if (h < 2) continue;
      owners.push_back(c);
      prefix.push_back(prefix.back() + h * (h - 1) / 2);
    }
    if (n_genuine > prefix.back()) {
      throw PairingError("requested " + std::to_string(n_genuine) +
                         " genuine pairs but only " +
                         std::to_string(prefix.back()) + " exist");
    }
    for (uint64_t t : sample_distinct(prefix.back(), n_genuine, rng)) {
      auto it = std::upper_bound(prefix.begin(), prefix.end(), t);
      const std::size_t o = static_cast<std::size_t>(it - prefix.begin()) - 1;
      const auto& hold = sp.holdout_by_id[owners[o]];
      auto [a, b] = decode_pair(hold.size(), t - prefix[o]);
      out.genuine.emplace_back(hold[a], hold[b]);
    }
  }

  if (n_impostor > 0) {
    std::vector<std::size_t> firsts;
    for (uint32_t c = 0; c < ds.n_id; ++c) {
      if (!sp.holdout_by_id[c].empty()) firsts.push_back(sp.holdout_by_id[c][0]);
    }
    const uint64_t m = firsts.size();
    const uint64_t total = m < 2 ? 0 : m * (m - 1) / 2;
    if (n_impostor > total) {
      throw PairingError("requested " + std::to_string(n_impostor) +
                         " impostor pairs but only " + std::to_string(total) +
                         " exist");
    }
    for (uint64_t t : sample_distinct(total, n_impostor, rng)) {
      auto [a, b] = decode_pair(m, t);
      out.impostor.emplace_back(firsts[a], firsts[b]);
    }
  }
  return out;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PersistenceError("cannot open " + path + " for writing");
  binio::put_magic(os, "DCPD");
  binio::put<uint32_t>(os, kDatasetVersion);
  binio::put<uint32_t>(os, ds.n_id);
  binio::put<uint32_t>(os, ds.d_in);
  binio::put<uint64_t>(os, ds.labels.size());
  binio::put<uint64_t>(os, ds.seed);
  binio::put_all<uint32_t>(os, ds.labels);
  binio::put_all<double>(os, ds.inputs.data);
  if (!os) throw PersistenceError("write failed for " + path);
}

Dataset load_dataset(const std::string& path, uint32_t holdout_per_id) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PersistenceError("cannot open " + path);
  binio::expect_magic(is, "DCPD");
  const auto version = binio::get<uint32_t>(is);
  if (version != kDatasetVersion) {
    throw PersistenceError("unsupported dataset version " + std::to_string(version));
  }
  Dataset ds;
  ds.n_id = binio::get<uint32_t>(is);
  ds.d_in = binio::get<uint32_t>(is);
  const auto n_total = binio::get<uint64_t>(is);
  ds.seed = binio::get<uint64_t>(is);
  ds.holdout_per_id = holdout_per_id;
  ds.labels.resize(n_total);
  binio::get_all<uint32_t>(is, ds.labels);
  ds.inputs = Matrix(n_total, ds.d_in);
  binio::get_all<double>(is, ds.inputs.data);
  index_dataset(ds);
  return ds;
}

void export_csv(const Dataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw PersistenceError("cannot open " + path + " for writing");
  os << "label";
  for (uint32_t d = 0; d < ds.d_in; ++d) os << ",v" << d;
  os << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << ds.labels[i];
    for (double v : ds.inputs.row(i)) os << ',' << v;
    os << '\n';
  }
  if (!os) throw PersistenceError("write failed for " + path);
}

}  // namespace dcp
