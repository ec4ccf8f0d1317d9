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

#include "dcp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dcp/errors.hpp"
#include "dcp/rng.hpp"

namespace dcp {

namespace {

// Shared kernel: softmax CE with the denominator over `classes`. pos maps a
// label to its position in `classes` (-1 when absent).
ClassifierLoss softmax_over(const Matrix& w, std::vector<uint32_t> classes,
                            const std::vector<int64_t>& pos, const Matrix& x,
                            std::span<const uint32_t> y) {
  if (x.cols != w.cols) {
    throw ShapeError("classifier width " + std::to_string(w.cols) +
                     " does not match input width " + std::to_string(x.cols));
  }
  if (y.size() != x.rows) throw ShapeError("label count does not match batch rows");
  ClassifierLoss out;
  const std::size_t n = x.rows;
  const std::size_t nc = classes.size();
  out.grad_weights = Matrix(nc, w.cols);
  out.grad_inputs = Matrix(n, w.cols);
  if (n == 0) {
    out.classes = std::move(classes);
    return out;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> z(nc);
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] >= w.rows) {
      throw InputError("label " + std::to_string(y[i]) + " out of range");
    }
    const int64_t target = pos[y[i]];
    if (target < 0) {
      throw ContractError("label " + std::to_string(y[i]) +
                          " is not in the optimization queue");
    }
    auto xi = x.row(i);
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nc; ++j) {
      z[j] = dot(w.row(classes[j]), xi);
      zmax = std::max(zmax, z[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < nc; ++j) {
      z[j] = std::exp(z[j] - zmax);
      sum += z[j];
    }
    out.value -= (std::log(z[static_cast<std::size_t>(target)]) - std::log(sum)) * inv_n;
    auto gx = out.grad_inputs.row(i);
    for (std::size_t j = 0; j < nc; ++j) {
      double coeff = z[j] / sum;
      if (static_cast<int64_t>(j) == target) coeff -= 1.0;
      coeff *= inv_n;
      if (coeff == 0.0) continue;
      axpy(coeff, xi, out.grad_weights.row(j));
      axpy(coeff, w.row(classes[j]), gx);
    }
  }
  out.classes = std::move(classes);
  return out;
}

}  // namespace

ClassifierLoss softmax_ce_full(const Matrix& w, const Matrix& x,
                               std::span<const uint32_t> y) {
  std::vector<uint32_t> classes(w.rows);
  std::iota(classes.begin(), classes.end(), 0u);
  std::vector<int64_t> pos(w.rows);
  std::iota(pos.begin(), pos.end(), int64_t{0});
  return softmax_over(w, std::move(classes), pos, x, y);
}

Matrix softmax_ce_grad_W(const Matrix& w, const Matrix& x,
                         std::span<const uint32_t> y) {
  return softmax_ce_full(w, x, y).grad_weights;
}

QueueMask select_queue(std::size_t n_id, std::size_t c,
                       std::span<const uint32_t> must_include, uint64_t seed) {
  QueueMask mask;
  mask.active.assign(n_id, 0);
  std::size_t forced = 0;
  for (uint32_t id : must_include) {
    if (id >= n_id) throw InputError("queue label " + std::to_string(id) + " out of range");
    if (!mask.active[id]) {
      mask.active[id] = 1;
      ++forced;
    }
  }
  if (c > n_id) {
    throw ConfigError("queue length " + std::to_string(c) + " exceeds class count " +
                      std::to_string(n_id));
  }
  if (c < forced) {
    throw ConfigError("queue length " + std::to_string(c) + " is below the " +
                      std::to_string(forced) + " distinct batch labels");
  }
  std::vector<uint32_t> rest;
  rest.reserve(n_id - forced);
  for (uint32_t k = 0; k < n_id; ++k) {
    if (!mask.active[k]) rest.push_back(k);
  }
  Rng rng(seed);
  const std::size_t extra = c - forced;
  for (std::size_t j = 0; j < extra; ++j) {
    const std::size_t pick = j + static_cast<std::size_t>(rng.below(rest.size() - j));
    std::swap(rest[j], rest[pick]);
    mask.active[rest[j]] = 1;
  }
  for (uint32_t k = 0; k < n_id; ++k) {
    if (mask.active[k]) mask.indices.push_back(k);
  }
  return mask;
}

ClassifierLoss masked_softmax_ce(const Matrix& w, const QueueMask& mask,
                                 const Matrix& x, std::span<const uint32_t> y) {
  if (mask.active.size() != w.rows) {
    throw ShapeError("queue mask length does not match classifier rows");
  }
  std::vector<int64_t> pos(w.rows, -1);
  for (std::size_t j = 0; j < mask.indices.size(); ++j) {
    pos[mask.indices[j]] = static_cast<int64_t>(j);
  }
  return softmax_over(w, mask.indices, pos, x, y);
}

LossOutput pool_ce(const Matrix& logits, std::span<const std::size_t> slot_targets,
                   const std::vector<bool>& occupied) {
  if (slot_targets.size() != logits.rows) {
    throw ShapeError("target count does not match logit rows");
  }
  LossOutput out;
  out.count = logits.rows;
  out.grad = Matrix(logits.rows, logits.cols);
  if (logits.rows == 0) return out;
  const double inv = 1.0 / static_cast<double>(logits.rows);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const std::size_t t = slot_targets[i];
    if (t >= logits.cols || (!occupied.empty() && !occupied[t])) {
      throw InputError("target slot " + std::to_string(t) + " is empty or out of range");
    }
    auto z = logits.row(i);
    const double zmax = *std::max_element(z.begin(), z.end());
    auto g = out.grad.row(i);
    double sum = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      g[c] = std::exp(z[c] - zmax);
      sum += g[c];
    }
    out.value -= (z[t] - zmax - std::log(sum)) * inv;
    for (std::size_t c = 0; c < z.size(); ++c) g[c] = g[c] / sum * inv;
    g[t] -= inv;
  }
  return out;
}

LossOutput cos_neg(const Matrix& features, const Matrix& centers,
                   const std::vector<bool>& occupied, CosOptions opts) {
  if (features.rows > 0 && features.cols != centers.cols) {
    throw ShapeError("feature width does not match center width");
  }
  LossOutput out;
  out.count = features.rows;
  out.grad = Matrix(features.rows, features.cols);
  if (features.rows == 0) return out;

  // Unit centers that take part.
  std::vector<std::size_t> valid;
  Matrix unit(centers.rows, centers.cols);
  for (std::size_t c = 0; c < centers.rows; ++c) {
    if (!occupied.empty() && !occupied[c]) continue;
    auto u = unit.row(c);
    auto src = centers.row(c);
    std::copy(src.begin(), src.end(), u.begin());
    if (normalize(u) == 0.0) {
      ++out.skipped_centers;
      continue;
    }
    valid.push_back(c);
  }
  if (valid.empty()) return out;

  const double inv_rows = 1.0 / static_cast<double>(features.rows);
  const double inv_centers = 1.0 / static_cast<double>(valid.size());
  std::vector<double> cosines(valid.size());
  std::vector<double> fhat(features.cols);
  for (std::size_t i = 0; i < features.rows; ++i) {
    auto f = features.row(i);
    const double fn = norm(f);
    if (!(fn > 0.0)) throw NumericError("zero-norm feature in cosine loss");
    for (std::size_t d = 0; d < f.size(); ++d) fhat[d] = f[d] / fn;
    for (std::size_t j = 0; j < valid.size(); ++j) {
      cosines[j] = dot(fhat, unit.row(valid[j]));
    }
    // Weight of each center's cosine in this row's phi.
    auto g = out.grad.row(i);
    auto add_center = [&](std::size_t j, double weight) {
      // d cos / d f = (u - cos * fhat) / |f|
      const double a = weight * inv_rows / fn;
      axpy(a, unit.row(valid[j]), g);
      axpy(-a * cosines[j], fhat, g);
    };
    double phi = 0.0;
    if (opts.reduction == CosReduction::mean) {
      for (std::size_t j = 0; j < valid.size(); ++j) {
        if (opts.hinge && cosines[j] <= 0.0) continue;
        phi += cosines[j] * inv_centers;
        add_center(j, inv_centers);
      }
    } else {
      const std::size_t j = static_cast<std::size_t>(
          std::max_element(cosines.begin(), cosines.end()) - cosines.begin());
      if (!opts.hinge || cosines[j] > 0.0) {
        phi = cosines[j];
        add_center(j, 1.0);
      }
    }
    out.value += phi * inv_rows;
  }
  return out;
}

LossOutput total_loss(const LossOutput& ce, const LossOutput& cos, double lambda,
                      std::size_t n_rows) {
  LossOutput out;
  out.value = ce.value + lambda * cos.value;
  out.count = ce.count + cos.count;
  out.skipped_centers = cos.skipped_centers;
  const std::size_t cols = std::max(ce.grad.cols, cos.grad.cols);
  out.grad = Matrix(n_rows, cols);
  auto scatter = [&](const LossOutput& part, double w) {
    if (part.grad.rows != part.rows.size()) {
      throw ShapeError("loss component gradient rows lack batch indices");
    }
    for (std::size_t r = 0; r < part.rows.size(); ++r) {
      if (part.rows[r] >= n_rows) throw ShapeError("loss row index out of range");
      axpy(w, part.grad.row(r), out.grad.row(part.rows[r]));
    }
  };
  scatter(ce, 1.0);
  if (lambda != 0.0) scatter(cos, lambda);
  out.rows.resize(n_rows);
  std::iota(out.rows.begin(), out.rows.end(), std::size_t{0});
  return out;
}

}  // namespace dcp
