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
#include <span>
#include <vector>

namespace dcp {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data[i * cols + j];
  }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }

  bool empty() const { return rows == 0; }
  bool operator==(const Matrix&) const = default;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
// Scales v to unit L2 norm; returns the original norm (0 leaves v untouched).
double normalize(std::span<double> v);

// Copies the listed rows of src into a new matrix, in order.
Matrix gather_rows(const Matrix& src, std::span<const std::size_t> rows);

bool all_finite(std::span<const double> v);

// Worker count for row-parallel kernels. Defaults to 1; the CLI sets it from
// DCP_THREADS.
void set_worker_threads(std::size_t n);
std::size_t worker_threads();

// Runs fn(begin, end) over contiguous chunks of [0, n). Chunks are fixed by
// the worker count, so results do not depend on scheduling.
template <typename Fn>
void parallel_rows(std::size_t n, Fn&& fn);

}  // namespace dcp

#include "dcp/detail/parallel.hpp"
